#pragma once

#include "headswap/nn/autograd.hpp"

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace headswap::nn {

/// Named parameters in insertion order. Addresses stay valid until erase().
class ParamStore
{
public:
    Parameter& add(std::string name, Tensor value, bool trainable = true);
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    bool contains(const std::string& name) const;
    void erase(const std::string& name);

    std::vector<Parameter*> all();
    std::vector<const Parameter*> all() const;
    /// Trainable parameters whose name starts with `prefix`.
    std::vector<Parameter*> trainable(const std::string& prefix = "");
    void zero_grad();
    std::size_t size() const { return params_.size(); }

    ParamStore() = default;
    ParamStore(const ParamStore& other);
    ParamStore& operator=(const ParamStore& other);
    ParamStore(ParamStore&&) noexcept = default;
    ParamStore& operator=(ParamStore&&) noexcept = default;

private:
    std::vector<std::unique_ptr<Parameter>> params_;
};

/// Binds each parameter to at most one leaf per tape. Parameters whose name
/// starts with one of `frozen_prefixes` are bound as constants.
class Binder
{
public:
    explicit Binder(Tape& tape, std::vector<std::string> frozen_prefixes = {})
        : tape_(tape), frozen_(std::move(frozen_prefixes))
    {
    }
    Var operator()(Parameter& p);
    Tape& tape() { return tape_; }

private:
    Tape& tape_;
    std::vector<std::string> frozen_;
    std::unordered_map<const Parameter*, Var> bound_;
};

} // namespace headswap::nn
