#include "headswap/binary_io.hpp"
#include "headswap/morphable_model.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>

using namespace headswap;

namespace {

// N = 4 tetrahedron, n_i = 2, n_e = 1, unit-vector bases.
ShapeBasis tiny_basis()
{
    ShapeBasis b;
    b.mean_id.resize(12);
    b.mean_id << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
    b.mean_exp = Eigen::VectorXd::Zero(12);
    b.U_id = Eigen::MatrixXd::Zero(12, 2);
    b.U_id(0, 0) = 1.0;
    b.U_id(4, 1) = 1.0;
    b.U_exp = Eigen::MatrixXd::Zero(12, 1);
    b.U_exp(11, 0) = 1.0;
    b.sigma_id = Eigen::Vector2d(0.5, 0.25);
    b.sigma_exp = Eigen::VectorXd::Constant(1, 0.1);
    b.topology = {{0, 1, 2}, {0, 2, 3}, {0, 3, 1}, {1, 3, 2}};
    b.landmark_indices.assign(kNumLandmarks, 0);
    for (int k = 0; k < kNumLandmarks; ++k)
        b.landmark_indices[static_cast<std::size_t>(k)] = k % 4;
    return b;
}

std::filesystem::path temp_file(const char* name) { return std::filesystem::temp_directory_path() / name; }

} // namespace

TEST_CASE("minimal container round trip")
{
    const ShapeBasis b = tiny_basis();
    const auto path = temp_file("headswap_tiny.fmm");
    save_model(b, path);
    const ShapeBasis back = load_model(path);
    CHECK(back.num_vertices() == 4);
    CHECK(back.num_identity() == 2);
    CHECK(back.num_expression() == 1);
    CHECK(back.mean_id == b.mean_id);
    CHECK(back.U_id == b.U_id);
    CHECK(back.sigma_exp == b.sigma_exp);
    CHECK(back.topology == b.topology);
    CHECK(back.landmark_indices == b.landmark_indices);

    const auto path2 = temp_file("headswap_tiny2.fmm");
    save_model(back, path2);
    CHECK(read_file_bytes(path) == read_file_bytes(path2));
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("synthetic model survives save/load byte-identically")
{
    SyntheticModelOptions opt;
    opt.grid = 16;
    const ShapeBasis b = make_synthetic_basis(opt);
    const auto bytes = encode_model(b);
    CHECK(encode_model(decode_model(bytes)) == bytes);
}

TEST_CASE("non-orthonormal basis is rejected")
{
    ShapeBasis b = tiny_basis();
    b.U_id.col(0) *= 2.0;
    const auto bytes = encode_model(b);
    try
    {
        decode_model(bytes);
        FAIL("expected an exception");
    }
    catch (const std::invalid_argument& e)
    {
        CHECK(std::string(e.what()).find("non-orthonormal") != std::string::npos);
    }
    CHECK_THROWS_AS(save_model(b, temp_file("headswap_bad.fmm")), std::invalid_argument);
}

TEST_CASE("corrupt containers")
{
    auto bytes = encode_model(tiny_basis());
    SUBCASE("bad magic")
    {
        bytes[1] = 'X';
        CHECK_THROWS_WITH_AS(decode_model(bytes), doctest::Contains("corrupt header"), std::runtime_error);
    }
    SUBCASE("truncated payload")
    {
        bytes.resize(bytes.size() - 8);
        CHECK_THROWS_AS(decode_model(bytes), std::runtime_error);
    }
    SUBCASE("extra payload")
    {
        bytes.resize(bytes.size() + 8);
        CHECK_THROWS_WITH_AS(decode_model(bytes), doctest::Contains("dimension mismatch"), std::runtime_error);
    }
    SUBCASE("garbage header")
    {
        bytes[9] = '!';
        CHECK_THROWS_AS(decode_model(bytes), std::runtime_error);
    }
}

TEST_CASE("synthesize_shape")
{
    SyntheticModelOptions opt;
    opt.grid = 16;
    const ShapeBasis b = make_synthetic_basis(opt);
    CHECK_NOTHROW(b.validate());
    const Eigen::VectorXd zi = Eigen::VectorXd::Zero(b.num_identity());
    const Eigen::VectorXd ze = Eigen::VectorXd::Zero(b.num_expression());

    const Eigen::VectorXd mean = synthesize_vector(b, zi, ze);
    CHECK(mean == b.mean_shape());

    Eigen::VectorXd e1 = zi;
    e1(0) = 1.0;
    CHECK((synthesize_vector(b, e1, ze) - (b.mean_shape() + b.U_id.col(0))).cwiseAbs().maxCoeff() < 1e-15);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    auto rv = [&](int k) {
        Eigen::VectorXd v(k);
        for (int i = 0; i < k; ++i)
            v(i) = n(rng);
        return v;
    };
    for (int trial = 0; trial < 5; ++trial)
    {
        const Eigen::VectorXd ia = rv(b.num_identity()), ib = rv(b.num_identity());
        const Eigen::VectorXd ea = rv(b.num_expression()), eb = rv(b.num_expression());
        const Eigen::VectorXd lhs = synthesize_vector(b, ia + ib, ea + eb) - mean;
        const Eigen::VectorXd rhs = (synthesize_vector(b, ia, ea) - mean) + (synthesize_vector(b, ib, eb) - mean);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
        // Direct matrix arithmetic.
        const Eigen::VectorXd direct = b.mean_id + b.mean_exp + b.U_id * ia + b.U_exp * ea;
        CHECK((synthesize_vector(b, ia, ea) - direct).cwiseAbs().maxCoeff() < 1e-12);
    }

    const Mesh m = synthesize_shape(b, {zi, ze});
    CHECK(m.vertices.rows() == b.num_vertices());
    CHECK(m.vertices(3, 1) == mean(10));
    CHECK_THROWS_AS(synthesize_shape(b, {rv(3), ze}), std::invalid_argument);
}

TEST_CASE("normalized mean face")
{
    ShapeBasis b = tiny_basis();
    b.mean_id << 0, 0, 0, 1, 5, 0, 3, 1, 2, 2, 0, 4;
    const NormalizedMeanFace f = normalized_mean_face(b);
    CHECK(f.coords(0, 0) == 0.0);
    CHECK(f.coords(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(f.coords(2, 0) == 1.0);
    CHECK(f.coords(3, 2) == 1.0);
    CHECK(f.coords(1, 1) == 1.0);

    SyntheticModelOptions opt;
    opt.grid = 16;
    const ShapeBasis s = make_synthetic_basis(opt);
    const NormalizedMeanFace g = normalized_mean_face(s);
    for (int a = 0; a < 3; ++a)
    {
        CHECK(g.coords.col(a).minCoeff() == 0.0);
        CHECK(g.coords.col(a).maxCoeff() == 1.0);
    }
    // Idempotent under renormalization.
    ShapeBasis again = s;
    again.mean_id = Eigen::Map<const Eigen::VectorXd>(g.coords.data(), g.coords.size());
    again.mean_exp.setZero();
    CHECK((normalized_mean_face(again).coords - g.coords).cwiseAbs().maxCoeff() < 1e-15);

    b.mean_id.setZero();
    CHECK_THROWS_WITH_AS(normalized_mean_face(b), doctest::Contains("degenerate"), std::invalid_argument);
}

TEST_CASE("landmark points pick the indexed vertices")
{
    const ShapeBasis b = tiny_basis();
    const Eigen::VectorXd shape = b.mean_shape();
    const Matrix3Xr lm = landmark_points(b, shape);
    CHECK(lm.rows() == kNumLandmarks);
    CHECK(lm(5, 0) == shape(3 * 1));
    CHECK(lm(7, 2) == shape(3 * 3 + 2));
}
