#include "headswap/nn/tensor.hpp"

#include <sstream>

namespace headswap::nn {

std::size_t numel(const Shape& shape)
{
    std::size_t n = 1;
    for (int d : shape)
    {
        if (d < 0)
            throw std::invalid_argument("negative tensor dimension");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const Shape& shape)
{
    std::ostringstream s;
    s << '{';
    for (std::size_t i = 0; i < shape.size(); ++i)
        s << (i ? "," : "") << shape[i];
    s << '}';
    return s.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
{
    if (data_.size() != numel(shape_))
        throw std::invalid_argument("tensor data length does not match shape " + shape_str(shape_));
}

Tensor Tensor::randn(Shape shape, double stddev, std::mt19937_64& rng)
{
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data_)
        v = dist(rng);
    return t;
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, std::mt19937_64& rng)
{
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.data_)
        v = dist(rng);
    return t;
}

double Tensor::item() const
{
    if (data_.size() != 1)
        throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const
{
    if (numel(shape) != data_.size())
        throw std::invalid_argument("shape mismatch: cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

} // namespace headswap::nn
