#include "headswap/morphable_model.hpp"

#include "headswap/binary_io.hpp"

#include <Eigen/Geometry>
#include <Eigen/QR>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace headswap {

namespace {

constexpr char kModelMagic[4] = {'F', 'M', 'M', '1'};

void check_orthonormal(const Eigen::MatrixXd& U, const char* name, double tol)
{
    const Eigen::MatrixXd gram = U.transpose() * U;
    const double err = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
    if (gram.size() > 0 && err > tol)
    {
        std::ostringstream msg;
        msg << "non-orthonormal " << name << " basis (max |U^T U - I| = " << err << ")";
        throw std::invalid_argument(msg.str());
    }
}

} // namespace

void ShapeBasis::validate(double orthonormality_tol) const
{
    const auto rows = mean_id.size();
    if (rows == 0 || rows % 3 != 0)
        throw std::invalid_argument("dimension mismatch: mean_id length must be a positive multiple of 3");
    if (mean_exp.size() != rows || U_id.rows() != rows || U_exp.rows() != rows)
        throw std::invalid_argument("dimension mismatch: basis rows disagree with mean shape");
    if (sigma_id.size() != U_id.cols() || sigma_exp.size() != U_exp.cols())
        throw std::invalid_argument("dimension mismatch: sigma length disagrees with basis columns");
    if (U_id.cols() >= rows || U_exp.cols() >= rows)
        throw std::invalid_argument("dimension mismatch: more components than shape dimensions");
    if ((sigma_id.array() <= 0.0).any() || (sigma_exp.array() <= 0.0).any())
        throw std::invalid_argument("sigma entries must be positive");
    if (!mean_id.allFinite() || !mean_exp.allFinite() || !U_id.allFinite() || !U_exp.allFinite())
        throw std::invalid_argument("model contains non-finite values");

    check_orthonormal(U_id, "identity", orthonormality_tol);
    check_orthonormal(U_exp, "expression", orthonormality_tol);

    const int n = num_vertices();
    for (const auto& tri : topology)
        for (int v : tri)
            if (v < 0 || v >= n)
                throw std::invalid_argument("topology index out of range");
    if (landmark_indices.size() != static_cast<std::size_t>(kNumLandmarks))
        throw std::invalid_argument("model must carry exactly 68 landmark indices");
    for (int v : landmark_indices)
        if (v < 0 || v >= n)
            throw std::invalid_argument("landmark index out of range");
}

Eigen::VectorXd synthesize_vector(const ShapeBasis& basis, const Eigen::VectorXd& identity,
                                  const Eigen::VectorXd& expression)
{
    if (identity.size() != basis.num_identity() || expression.size() != basis.num_expression())
        throw std::invalid_argument("dimension mismatch: coefficients do not match basis");
    Eigen::VectorXd shape = basis.mean_id + basis.mean_exp;
    shape.noalias() += basis.U_id * identity;
    shape.noalias() += basis.U_exp * expression;
    return shape;
}

Mesh synthesize_shape(const ShapeBasis& basis, const ShapeParams& params)
{
    const Eigen::VectorXd shape = synthesize_vector(basis, params.identity, params.expression);
    Mesh mesh;
    mesh.vertices = Eigen::Map<const Matrix3Xr>(shape.data(), basis.num_vertices(), 3);
    mesh.topology = basis.topology;
    return mesh;
}

NormalizedMeanFace normalized_mean_face(const ShapeBasis& basis)
{
    const Eigen::VectorXd mean = basis.mean_shape();
    const Matrix3Xr pts = Eigen::Map<const Matrix3Xr>(mean.data(), basis.num_vertices(), 3);
    NormalizedMeanFace out;
    out.coords.resize(pts.rows(), 3);
    for (int a = 0; a < 3; ++a)
    {
        const double lo = pts.col(a).minCoeff();
        const double hi = pts.col(a).maxCoeff();
        const double range = hi - lo;
        if (!(range > 0.0))
            throw std::invalid_argument("degenerate mean face: zero range along axis " + std::to_string(a));
        out.coords.col(a) = (pts.col(a).array() - lo) / range;
    }
    return out;
}

Matrix3Xr landmark_points(const ShapeBasis& basis, const Eigen::VectorXd& shape)
{
    Matrix3Xr out(kNumLandmarks, 3);
    for (int k = 0; k < kNumLandmarks; ++k)
        out.row(k) = shape.segment<3>(3 * basis.landmark_indices[k]).transpose();
    return out;
}

std::vector<std::uint8_t> encode_model(const ShapeBasis& basis)
{
    nlohmann::json header;
    header["num_vertices"] = basis.num_vertices();
    header["n_id"] = basis.num_identity();
    header["n_exp"] = basis.num_expression();
    header["landmarks"] = basis.landmark_indices;
    header["triangles"] = basis.topology;
    header["blobs"] = {"mean_id", "mean_exp", "U_id", "U_exp", "sigma_id", "sigma_exp"};
    const std::string text = header.dump();

    ByteWriter out;
    out.raw(kModelMagic, 4);
    out.u32(static_cast<std::uint32_t>(text.size()));
    out.raw(text.data(), text.size());
    // Eigen's default storage is column-major, matching the container layout.
    out.f64s(basis.mean_id.data(), basis.mean_id.size());
    out.f64s(basis.mean_exp.data(), basis.mean_exp.size());
    out.f64s(basis.U_id.data(), basis.U_id.size());
    out.f64s(basis.U_exp.data(), basis.U_exp.size());
    out.f64s(basis.sigma_id.data(), basis.sigma_id.size());
    out.f64s(basis.sigma_exp.data(), basis.sigma_exp.size());
    return out.take();
}

ShapeBasis decode_model(std::span<const std::uint8_t> bytes)
{
    ByteReader in(bytes);
    char magic[4];
    in.raw(magic, 4);
    if (!std::equal(magic, magic + 4, kModelMagic))
        throw std::runtime_error("corrupt header: bad magic in model container");
    const std::uint32_t header_len = in.u32();
    std::string text(header_len, '\0');
    in.raw(text.data(), header_len);

    nlohmann::json header;
    try
    {
        header = nlohmann::json::parse(text);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw std::runtime_error(std::string("corrupt header: ") + e.what());
    }

    ShapeBasis basis;
    long n = 0, n_id = 0, n_exp = 0;
    try
    {
        n = header.at("num_vertices").get<long>();
        n_id = header.at("n_id").get<long>();
        n_exp = header.at("n_exp").get<long>();
        basis.landmark_indices = header.at("landmarks").get<std::vector<int>>();
        basis.topology = header.at("triangles").get<std::vector<Triangle>>();
    }
    catch (const nlohmann::json::exception& e)
    {
        throw std::runtime_error(std::string("corrupt header: ") + e.what());
    }
    if (n <= 0 || n_id < 0 || n_exp < 0)
        throw std::runtime_error("corrupt header: invalid dimensions");

    const long rows = 3 * n;
    const auto expected = static_cast<std::size_t>(rows * (2 + n_id + n_exp) + n_id + n_exp) * 8;
    if (in.remaining() != expected)
        throw std::runtime_error("dimension mismatch: payload size disagrees with header");

    basis.mean_id.resize(rows);
    basis.mean_exp.resize(rows);
    basis.U_id.resize(rows, n_id);
    basis.U_exp.resize(rows, n_exp);
    basis.sigma_id.resize(n_id);
    basis.sigma_exp.resize(n_exp);
    in.f64s(basis.mean_id.data(), basis.mean_id.size());
    in.f64s(basis.mean_exp.data(), basis.mean_exp.size());
    in.f64s(basis.U_id.data(), basis.U_id.size());
    in.f64s(basis.U_exp.data(), basis.U_exp.size());
    in.f64s(basis.sigma_id.data(), basis.sigma_id.size());
    in.f64s(basis.sigma_exp.data(), basis.sigma_exp.size());
    basis.validate();
    return basis;
}

ShapeBasis load_model(const std::filesystem::path& path)
{
    return decode_model(read_file_bytes(path));
}

void save_model(const ShapeBasis& basis, const std::filesystem::path& path)
{
    basis.validate();
    write_file_bytes(path, encode_model(basis));
}

namespace {

struct Placement
{
    double u, v;
};

std::vector<Placement> landmark_layout()
{
    using std::numbers::pi;
    std::vector<Placement> p;
    p.reserve(kNumLandmarks);
    for (int k = 0; k <= 16; ++k) // jaw, left temple -> chin -> right temple
    {
        const double t = pi * k / 16.0;
        p.push_back({-0.85 * std::cos(t), 0.05 + 0.8 * std::sin(t)});
    }
    for (int side = -1; side <= 1; side += 2) // brows
        for (int k = 0; k < 5; ++k)
        {
            const double u = side < 0 ? -0.7 + 0.12 * k : 0.22 + 0.12 * k;
            const double mid = side < 0 ? -0.46 : 0.46;
            p.push_back({u, -0.5 + 1.2 * (u - mid) * (u - mid)});
        }
    for (int k = 0; k < 4; ++k) // nose bridge
        p.push_back({0.0, -0.32 + 0.12 * k});
    for (int k = 0; k < 5; ++k) // nostrils
        p.push_back({-0.16 + 0.08 * k, 0.2 + 0.03 * std::abs(k - 2)});
    for (int side = -1; side <= 1; side += 2) // eyes
        for (int k = 0; k < 6; ++k)
        {
            const double t = pi + 2.0 * pi * k / 6.0;
            p.push_back({0.4 * side + 0.16 * std::cos(t), -0.24 + 0.07 * std::sin(t)});
        }
    for (int k = 0; k < 12; ++k) // outer lip
    {
        const double t = pi + 2.0 * pi * k / 12.0;
        p.push_back({0.32 * std::cos(t), 0.5 + 0.14 * std::sin(t)});
    }
    for (int k = 0; k < 8; ++k) // inner lip
    {
        const double t = pi + 2.0 * pi * k / 8.0;
        p.push_back({0.2 * std::cos(t), 0.5 + 0.07 * std::sin(t)});
    }
    return p;
}

double face_depth(double u, double v)
{
    const double dome = 0.55 * std::sqrt(std::max(0.0, 1.1 - 0.8 * u * u - 0.6 * v * v));
    const double nose = 0.32 * std::exp(-(u * u / 0.015 + (v - 0.02) * (v - 0.02) / 0.09));
    const double eyes = -0.05 * (std::exp(-((u - 0.4) * (u - 0.4) + (v + 0.24) * (v + 0.24)) / 0.02) +
                                 std::exp(-((u + 0.4) * (u + 0.4) + (v + 0.24) * (v + 0.24)) / 0.02));
    return dome + nose + eyes;
}

// Orthonormal columns spanning smooth deformation fields, with the rigid
// motions of `mean` projected out so that camera and shape stay separable.
Eigen::MatrixXd smooth_orthonormal_basis(const std::vector<Placement>& uv, const Eigen::VectorXd& mean,
                                         int components, int order, bool lower_face, std::mt19937_64& rng)
{
    using std::numbers::pi;
    const long n = static_cast<long>(uv.size());
    const int per_axis = (order + 1) * (order + 1);
    Eigen::MatrixXd features = Eigen::MatrixXd::Zero(3 * n, 3 * per_axis);
    for (long i = 0; i < n; ++i)
    {
        const auto [u, v] = uv[i];
        const double window = lower_face ? 0.25 + std::exp(-(u * u / 0.35 + (v - 0.45) * (v - 0.45) / 0.12))
                                         : 1.0;
        for (int a = 0; a < 3; ++a)
            for (int p = 0; p <= order; ++p)
                for (int q = 0; q <= order; ++q)
                {
                    const double f = std::cos(p * pi * (u + 1) / 2) * std::cos(q * pi * (v + 1) / 2);
                    features(3 * i + a, a * per_axis + p * (order + 1) + q) = window * f;
                }
    }

    Eigen::MatrixXd rigid(3 * n, 7);
    rigid.setZero();
    for (long i = 0; i < n; ++i)
    {
        const Eigen::Vector3d x = mean.segment<3>(3 * i);
        for (int a = 0; a < 3; ++a)
            rigid(3 * i + a, a) = 1.0;
        const Eigen::Vector3d e[3] = {Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ()};
        for (int a = 0; a < 3; ++a)
            rigid.block<3, 1>(3 * i, 3 + a) = e[a].cross(x);
        rigid.block<3, 1>(3 * i, 6) = x;
    }
    const Eigen::MatrixXd rq = Eigen::HouseholderQR<Eigen::MatrixXd>(rigid).householderQ() *
                               Eigen::MatrixXd::Identity(3 * n, 7);
    features -= rq * (rq.transpose() * features);

    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd mix(features.cols(), components);
    for (long c = 0; c < mix.cols(); ++c)
        for (long r = 0; r < mix.rows(); ++r)
            mix(r, c) = gauss(rng);
    const Eigen::MatrixXd fields = features * mix;
    return Eigen::HouseholderQR<Eigen::MatrixXd>(fields).householderQ() *
           Eigen::MatrixXd::Identity(3 * n, components);
}

} // namespace

ShapeBasis make_synthetic_basis(const SyntheticModelOptions& options)
{
    if (options.grid < 8 || options.n_id < 0 || options.n_exp < 0)
        throw std::invalid_argument("invalid synthetic model options");

    const int g = options.grid;
    const double half_w = options.face_width / 2.0;
    const double half_h = 1.25 * half_w;

    std::vector<int> index(static_cast<std::size_t>(g * g), -1);
    std::vector<Placement> uv;
    for (int r = 0; r < g; ++r)
        for (int c = 0; c < g; ++c)
        {
            const double u = -1.0 + 2.0 * c / (g - 1);
            const double v = -1.0 + 2.0 * r / (g - 1);
            if (u * u + v * v <= 1.02)
            {
                index[r * g + c] = static_cast<int>(uv.size());
                uv.push_back({u, v});
            }
        }

    const long n = static_cast<long>(uv.size());
    ShapeBasis basis;
    basis.mean_id.resize(3 * n);
    basis.mean_exp = Eigen::VectorXd::Zero(3 * n);
    for (long i = 0; i < n; ++i)
    {
        const auto [u, v] = uv[i];
        basis.mean_id.segment<3>(3 * i) << u * half_w, v * half_h, -face_depth(u, v) * half_w;
        // Resting expression: lips slightly parted.
        const double lip = std::exp(-(u * u / 0.08 + (v - 0.5) * (v - 0.5) / 0.01));
        basis.mean_exp(3 * i + 1) = 0.02 * half_h * lip * (v > 0.5 ? 1.0 : -1.0);
    }

    // Winding gives a positive edge function in y-down image space when the
    // face is viewed frontally.
    for (int r = 0; r + 1 < g; ++r)
        for (int c = 0; c + 1 < g; ++c)
        {
            const int v00 = index[r * g + c], v10 = index[r * g + c + 1];
            const int v01 = index[(r + 1) * g + c], v11 = index[(r + 1) * g + c + 1];
            if (v00 >= 0 && v10 >= 0 && v01 >= 0)
                basis.topology.push_back({v00, v10, v01});
            if (v10 >= 0 && v11 >= 0 && v01 >= 0)
                basis.topology.push_back({v10, v11, v01});
        }

    for (const auto& [lu, lv] : landmark_layout())
    {
        long best = 0;
        double best_d = 1e300;
        for (long i = 0; i < n; ++i)
        {
            const double d = (uv[i].u - lu) * (uv[i].u - lu) + (uv[i].v - lv) * (uv[i].v - lv);
            if (d < best_d)
            {
                best_d = d;
                best = i;
            }
        }
        basis.landmark_indices.push_back(static_cast<int>(best));
    }

    std::mt19937_64 rng(options.seed);
    const Eigen::VectorXd mean = basis.mean_id + basis.mean_exp;
    basis.U_id = smooth_orthonormal_basis(uv, mean, options.n_id, 4, false, rng);
    basis.U_exp = smooth_orthonormal_basis(uv, mean, options.n_exp, 4, true, rng);

    const double root_n = std::sqrt(static_cast<double>(n));
    basis.sigma_id.resize(options.n_id);
    for (int j = 0; j < options.n_id; ++j)
        basis.sigma_id(j) = options.sigma_id_scale * options.face_width * root_n / std::sqrt(1.0 + j);
    basis.sigma_exp.resize(options.n_exp);
    for (int j = 0; j < options.n_exp; ++j)
        basis.sigma_exp(j) = options.sigma_exp_scale * options.face_width * root_n / std::sqrt(1.0 + j);

    basis.validate();
    return basis;
}

} // namespace headswap
