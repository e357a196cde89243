#include "headswap/pipeline/formats.hpp"

#include <fstream>
#include <stdexcept>

namespace headswap {

namespace {

Eigen::VectorXd to_vector(const nlohmann::json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_list(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::Vector3d to_vec3(const nlohmann::json& j)
{
    const Eigen::VectorXd v = to_vector(j);
    if (v.size() != 3)
        throw std::runtime_error("corrupt header: expected a 3-vector");
    return v;
}

} // namespace

nlohmann::json landmarks_to_json(const std::vector<Landmarks2D>& landmarks)
{
    nlohmann::json frames = nlohmann::json::array();
    for (const Landmarks2D& lm : landmarks)
    {
        nlohmann::json pts = nlohmann::json::array();
        for (Eigen::Index i = 0; i < lm.points.rows(); ++i)
            pts.push_back({lm.points(i, 0), lm.points(i, 1)});
        nlohmann::json f = {{"points", pts}};
        if (lm.confidence)
            f["confidence"] = to_list(*lm.confidence);
        frames.push_back(f);
    }
    return {{"frames", frames}};
}

std::vector<Landmarks2D> landmarks_from_json(const nlohmann::json& j)
{
    std::vector<Landmarks2D> out;
    try
    {
        for (const auto& f : j.at("frames"))
        {
            Landmarks2D lm;
            const auto& pts = f.at("points");
            if (pts.size() != static_cast<std::size_t>(kNumLandmarks))
                throw std::runtime_error("corrupt header: landmark frame needs 68 points");
            lm.points.resize(kNumLandmarks, 2);
            for (int i = 0; i < kNumLandmarks; ++i)
            {
                const auto xy = pts[static_cast<std::size_t>(i)].get<std::vector<double>>();
                if (xy.size() != 2)
                    throw std::runtime_error("corrupt header: landmark point needs 2 coordinates");
                lm.points(i, 0) = xy[0];
                lm.points(i, 1) = xy[1];
            }
            if (f.contains("confidence"))
            {
                lm.confidence = to_vector(f["confidence"]);
                if (lm.confidence->size() != kNumLandmarks)
                    throw std::runtime_error("corrupt header: confidence needs 68 entries");
            }
            out.push_back(std::move(lm));
        }
    }
    catch (const nlohmann::json::exception& e)
    {
        throw std::runtime_error(std::string("corrupt header: landmark JSON: ") + e.what());
    }
    return out;
}

nlohmann::json fit_to_json(const FitResult& fit)
{
    nlohmann::json frames = nlohmann::json::array();
    for (int t = 0; t < fit.num_frames(); ++t)
    {
        const SopCamera& c = fit.cameras[static_cast<std::size_t>(t)];
        frames.push_back({{"expression", to_list(fit.expressions.row(t).transpose())},
                          {"camera",
                           {{"rotation", to_list(c.rotation)},
                            {"translation", to_list(c.translation)},
                            {"scale", c.scale}}}});
    }
    return {{"identity", to_list(fit.identity)},
            {"frames", frames},
            {"energy",
             {{"total", fit.final_energy},
              {"landmark", fit.terms.landmark},
              {"prior", fit.terms.prior},
              {"smoothness", fit.terms.smoothness},
              {"trace", fit.energy_trace}}}};
}

FitResult fit_from_json(const nlohmann::json& j)
{
    FitResult fit;
    try
    {
        fit.identity = to_vector(j.at("identity"));
        const auto& frames = j.at("frames");
        const auto T = static_cast<Eigen::Index>(frames.size());
        Eigen::Index ne = -1;
        for (Eigen::Index t = 0; t < T; ++t)
        {
            const auto& f = frames[static_cast<std::size_t>(t)];
            const Eigen::VectorXd e = to_vector(f.at("expression"));
            if (ne < 0)
            {
                ne = e.size();
                fit.expressions.resize(T, ne);
            }
            if (e.size() != ne)
                throw std::runtime_error("corrupt header: expression lengths differ between frames");
            fit.expressions.row(t) = e.transpose();
            SopCamera c;
            c.rotation = to_vec3(f.at("camera").at("rotation"));
            c.translation = to_vec3(f.at("camera").at("translation"));
            c.scale = f.at("camera").at("scale").get<double>();
            fit.cameras.push_back(c);
        }
        if (j.contains("energy"))
        {
            const auto& e = j["energy"];
            fit.final_energy = e.value("total", 0.0);
            fit.terms.landmark = e.value("landmark", 0.0);
            fit.terms.prior = e.value("prior", 0.0);
            fit.terms.smoothness = e.value("smoothness", 0.0);
            fit.energy_trace = e.value("trace", std::vector<double>{});
        }
    }
    catch (const nlohmann::json::exception& e)
    {
        throw std::runtime_error(std::string("corrupt header: fit JSON: ") + e.what());
    }
    return fit;
}

nlohmann::json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    try
    {
        return nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::parse_error& e)
    {
        throw std::runtime_error("corrupt header: " + path.string() + ": " + e.what());
    }
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

} // namespace headswap
