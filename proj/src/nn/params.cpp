#include "headswap/nn/params.hpp"

#include <algorithm>

namespace headswap::nn {

Parameter& ParamStore::add(std::string name, Tensor value, bool trainable)
{
    if (contains(name))
        throw std::invalid_argument("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value), trainable));
    return *params_.back();
}

Parameter& ParamStore::at(const std::string& name)
{
    return const_cast<Parameter&>(std::as_const(*this).at(name));
}

const Parameter& ParamStore::at(const std::string& name) const
{
    for (const auto& p : params_)
        if (p->name == name)
            return *p;
    throw std::out_of_range("no parameter named " + name);
}

bool ParamStore::contains(const std::string& name) const
{
    return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p->name == name; });
}

void ParamStore::erase(const std::string& name)
{
    std::erase_if(params_, [&](const auto& p) { return p->name == name; });
}

std::vector<Parameter*> ParamStore::all()
{
    std::vector<Parameter*> out;
    for (auto& p : params_)
        out.push_back(p.get());
    return out;
}

std::vector<const Parameter*> ParamStore::all() const
{
    std::vector<const Parameter*> out;
    for (const auto& p : params_)
        out.push_back(p.get());
    return out;
}

std::vector<Parameter*> ParamStore::trainable(const std::string& prefix)
{
    std::vector<Parameter*> out;
    for (auto& p : params_)
        if (p->trainable && p->name.starts_with(prefix))
            out.push_back(p.get());
    return out;
}

void ParamStore::zero_grad()
{
    for (auto& p : params_)
        p->zero_grad();
}

ParamStore::ParamStore(const ParamStore& other)
{
    for (const auto& p : other.params_)
        params_.push_back(std::make_unique<Parameter>(*p));
}

ParamStore& ParamStore::operator=(const ParamStore& other)
{
    if (this != &other)
    {
        ParamStore copy(other);
        params_ = std::move(copy.params_);
    }
    return *this;
}

Var Binder::operator()(Parameter& p)
{
    const auto it = bound_.find(&p);
    if (it != bound_.end())
        return it->second;
    const bool frozen =
        std::any_of(frozen_.begin(), frozen_.end(), [&](const std::string& f) { return p.name.starts_with(f); });
    const Var v = frozen ? tape_.constant(p.value) : tape_.param(p);
    bound_.emplace(&p, v);
    return v;
}

} // namespace headswap::nn
