#include "headswap/pipeline/cli.hpp"

#include "headswap/pipeline/dataset.hpp"
#include "headswap/pipeline/formats.hpp"
#include "headswap/pipeline/synthetic.hpp"
#include "headswap/reenactment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace headswap {

namespace fs = std::filesystem;
using gan::GanModel;

namespace {

struct Globals
{
    std::optional<std::uint64_t> seed;
    int threads = 1;
};

void save_gan(const GanModel& model, const fs::path& path)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    nn::save_checkpoint(gan::to_checkpoint(model), path);
}

GanModel load_gan(const fs::path& path) { return gan::from_checkpoint(nn::load_checkpoint(path)); }

void write_frames(const std::vector<Image>& frames, const fs::path& dir, bool mask)
{
    fs::create_directories(dir);
    for (std::size_t i = 0; i < frames.size(); ++i)
    {
        const fs::path p = dir / frame_name(static_cast<int>(i));
        mask ? write_mask_png(frames[i], p) : write_png(frames[i], p);
    }
}

/// Dataset plus its NMFC renders from <root>/nmfc.
gan::IdentityClip load_clip(const fs::path& root)
{
    const VideoDataset data = load_dataset(root);
    if (!data.masks)
        throw std::invalid_argument("dataset " + root.string() + " has no masks");
    const std::vector<NmfcImage> nmfc = load_nmfc_dir(root / "nmfc");
    if (nmfc.size() != data.frames.size())
        throw std::invalid_argument("dimension mismatch: " + root.string() + " has " +
                                    std::to_string(data.frames.size()) + " frames but " + std::to_string(nmfc.size()) +
                                    " NMFC renders");
    return make_clip(data.frames, *data.masks, nmfc, data.landmarks);
}

struct SynthArgs
{
    fs::path out;
    int persons = 2;
    int frames = 60;
    int size = 32;
};

void run_synth(const SynthArgs& a, const Globals& g, std::ostream& out)
{
    const std::uint64_t seed = g.seed.value_or(1);
    SyntheticModelOptions mo;
    mo.seed = seed;
    const ShapeBasis basis = make_synthetic_basis(mo);
    fs::create_directories(a.out);
    save_model(basis, a.out / "model.fmm");
    for (int p = 0; p < a.persons; ++p)
    {
        SyntheticPersonOptions po;
        po.frames = a.frames;
        po.size = a.size;
        po.seed = seed * 1000 + static_cast<std::uint64_t>(p) + 1;
        const SyntheticPerson person = make_synthetic_person(basis, po);
        char name[32];
        std::snprintf(name, sizeof name, "person_%03d", p);
        const fs::path root = a.out / name;
        VideoDataset data;
        data.frames = person.frames;
        data.masks = person.masks;
        data.landmarks = person.landmarks;
        save_dataset(data, root);
        save_nmfc_dir(person.nmfc, root / "nmfc");
        write_json(fit_to_json(person.truth), root / "truth.json");
        out << "wrote " << root.string() << " (" << a.frames << " frames)\n";
    }
}

struct FitArgs
{
    fs::path model, landmarks, out;
    EnergyWeights weights;
    BoxConstraints box;
    int iterations = FitOptions{}.max_outer_iterations;
};

void run_fit(const FitArgs& a, const Globals& g, std::ostream& out)
{
    const ShapeBasis basis = load_model(a.model);
    nlohmann::json j = read_json(a.landmarks);
    const std::vector<Landmarks2D> landmarks = landmarks_from_json(j);
    FitOptions opt;
    opt.weights = a.weights;
    opt.box = a.box;
    opt.max_outer_iterations = a.iterations;
    opt.threads = g.threads;
    const FitResult fit = fit_video(basis, landmarks, opt);
    write_json(fit_to_json(fit), a.out);
    out << "fit " << fit.num_frames() << " frames, energy " << fit.final_energy << "\n";
}

struct NmfcArgs
{
    fs::path model, fit, out;
    int size = 256;
};

void run_nmfc(const NmfcArgs& a, const Globals& g, std::ostream& out)
{
    const ShapeBasis basis = load_model(a.model);
    const FitResult fit = fit_from_json(read_json(a.fit));
    const std::vector<NmfcImage> frames = render_nmfc_sequence(basis, fit, a.size, a.size, g.threads);
    save_nmfc_dir(frames, a.out);
    out << "rendered " << frames.size() << " NMFC frames\n";
}

struct ReenactArgs
{
    fs::path model, source, target, out;
    int size = 256;
    std::string scale_policy = "keep";
};

/// Writes <out>/fit.json with the transferred parameters and their NMFC renders.
void run_reenact(const ReenactArgs& a, const Globals& g, std::ostream& out)
{
    const ShapeBasis basis = load_model(a.model);
    TransferSpec spec{fit_from_json(read_json(a.source)), fit_from_json(read_json(a.target)).identity,
                      a.scale_policy == "none" ? ScalePolicy::none : ScalePolicy::keep_source_camera};
    const FitResult result = transfer_params(spec);
    const std::vector<NmfcImage> frames = render_nmfc_sequence(basis, result, a.size, a.size, g.threads);
    save_nmfc_dir(frames, a.out);
    write_json(fit_to_json(result), a.out / "fit.json");
    out << "transferred " << result.num_frames() << " frames\n";
}

struct TrainArgs
{
    std::vector<fs::path> data;
    fs::path checkpoint, out, log, train_config;
    int steps = -1;
    double lr = -1;
    int channels = gan::GanConfig{}.channels;
    int n_f = gan::GanConfig{}.n_f;
    int test_len = 0;
};

gan::TrainConfig train_config(const TrainArgs& a, const Globals& g)
{
    gan::TrainConfig cfg;
    if (!a.train_config.empty())
        cfg = gan::TrainConfig::from_json(read_json(a.train_config));
    if (a.steps >= 0)
        cfg.steps = a.steps;
    if (a.lr > 0)
        cfg.adam.lr = a.lr;
    if (g.seed)
        cfg.seed = *g.seed;
    return cfg;
}

void run_train_init(const TrainArgs& a, const Globals& g, std::ostream& out)
{
    std::vector<gan::IdentityClip> clips;
    for (const fs::path& d : a.data)
        clips.push_back(load_clip(d));
    const nn::Shape s = clips.front().frames.front().shape();
    gan::GanConfig cfg;
    if (s[1] != s[2])
        throw std::invalid_argument("shape mismatch: frames must be square");
    cfg.resolution = s[1];
    cfg.channels = a.channels;
    cfg.n_f = a.n_f;
    cfg.num_identities = static_cast<int>(clips.size());
    cfg.seed = g.seed.value_or(cfg.seed);
    GanModel model = gan::init_model(cfg);
    const gan::TrainLog log = gan::train_init_stage(model, clips, train_config(a, g));
    save_gan(model, a.out);
    if (!a.log.empty())
        log.write_csv(a.log);
    out << "trained " << log.records.size() << " steps on " << clips.size() << " identities\n";
}

void run_finetune(const TrainArgs& a, const Globals& g, std::ostream& out)
{
    const GanModel multi = load_gan(a.checkpoint);
    gan::IdentityClip clip = load_clip(a.data.front());
    if (a.test_len > 0)
    {
        if (clip.size() <= a.test_len)
            throw std::invalid_argument("dataset too short: " + std::to_string(clip.size()) + " frames with test_len " +
                                        std::to_string(a.test_len));
        clip = clip.slice(0, clip.size() - a.test_len);
    }
    GanModel person = gan::finetune_init(multi, clip.frames);
    const gan::TrainLog log = gan::finetune_train(person, clip, train_config(a, g));
    save_gan(person, a.out);
    if (!a.log.empty())
        log.write_csv(a.log);
    out << "fine-tuned " << log.records.size() << " steps on " << clip.size() << " frames\n";
}

struct RenderArgs
{
    fs::path checkpoint, nmfc, out, background, reference;
};

void run_render(const RenderArgs& a, std::ostream& out)
{
    GanModel model = load_gan(a.checkpoint);
    std::vector<nn::Tensor> nmfc;
    for (const NmfcImage& n : load_nmfc_dir(a.nmfc))
        nmfc.push_back(nmfc_to_tensor(n));
    if (nmfc.empty())
        throw std::invalid_argument("no NMFC frames in " + a.nmfc.string());
    std::optional<nn::Tensor> h;
    if (!model.person_specific)
    {
        if (a.reference.empty())
            throw std::invalid_argument("an adaptive checkpoint needs --reference");
        std::vector<nn::Tensor> frames;
        for (const Image& f : load_dataset(a.reference).frames)
            frames.push_back(rgb_to_tensor(f));
        h = gan::identity_feature(model, frames);
    }
    const auto [frames, masks] = gan::synthesize(model, nmfc, h);
    std::vector<Image> rgb, alpha;
    const std::vector<Image> backgrounds = a.background.empty() ? std::vector<Image>{} : load_image_dir(a.background);
    for (std::size_t t = 0; t < frames.size(); ++t)
    {
        rgb.push_back(tensor_to_rgb(frames[t]));
        alpha.push_back(tensor_to_mask(masks[t]));
        if (!backgrounds.empty())
            rgb.back() = composite_background(rgb.back(), alpha.back(), backgrounds[t % backgrounds.size()]);
    }
    write_frames(rgb, a.out / "frames", false);
    write_frames(alpha, a.out / "masks", true);
    out << "rendered " << rgb.size() << " frames\n";
}

struct MetricsArgs
{
    fs::path fake, real, masks, predicted_masks, out;
};

void run_metrics(const MetricsArgs& a, const Globals& g, std::ostream& out)
{
    const std::vector<Image> fake = load_image_dir(a.fake), real = load_image_dir(a.real);
    std::optional<std::vector<Image>> truth, predicted;
    if (!a.masks.empty())
        truth = load_mask_dir(a.masks);
    if (!a.predicted_masks.empty())
        predicted = load_mask_dir(a.predicted_masks);
    const MetricsReport report = evaluate_sequence(fake, real, truth ? &*truth : nullptr,
                                                   predicted ? &*predicted : nullptr, g.threads);
    if (!a.out.empty())
        write_json(report.to_json(), a.out);
    out << report.to_json().dump(2) << "\n";
}

} // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app("Synthetic head reenactment pipeline", "headswap");
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML file with one [section] per subcommand");
    Globals g;
    app.add_option("--seed", g.seed, "Seed for synthesis and training")->configurable();
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber)->configurable();

    SynthArgs synth;
    CLI::App* synth_cmd = app.add_subcommand("synth-data", "Write a synthetic model and people");
    synth_cmd->add_option("--out", synth.out)->required();
    synth_cmd->add_option("--persons", synth.persons)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--frames", synth.frames)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--size", synth.size)->check(CLI::PositiveNumber);

    FitArgs fit;
    CLI::App* fit_cmd = app.add_subcommand("fit", "Fit model coefficients and cameras to landmarks");
    fit_cmd->add_option("--model", fit.model)->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("--landmarks", fit.landmarks)->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("--out", fit.out)->required();
    fit_cmd->add_option("--w-l", fit.weights.landmark, "Landmark weight")->check(CLI::NonNegativeNumber);
    fit_cmd->add_option("--w-pr", fit.weights.prior, "Prior weight")->check(CLI::NonNegativeNumber);
    fit_cmd->add_option("--w-sm", fit.weights.smoothness, "Smoothness weight")->check(CLI::NonNegativeNumber);
    fit_cmd->add_option("--k-id", fit.box.k_id, "Identity box half-width in sigmas")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--k-exp", fit.box.k_exp, "Expression box half-width in sigmas")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--iterations", fit.iterations)->check(CLI::PositiveNumber);

    NmfcArgs nmfc;
    CLI::App* nmfc_cmd = app.add_subcommand("nmfc", "Render NMFC images of a fit");
    nmfc_cmd->add_option("--model", nmfc.model)->required()->check(CLI::ExistingFile);
    nmfc_cmd->add_option("--fit", nmfc.fit)->required()->check(CLI::ExistingFile);
    nmfc_cmd->add_option("--out", nmfc.out)->required();
    nmfc_cmd->add_option("--size", nmfc.size, "Square output resolution")->check(CLI::PositiveNumber);

    ReenactArgs reenact;
    CLI::App* reenact_cmd = app.add_subcommand("reenact", "Carry source motion over to the target identity");
    reenact_cmd->add_option("--model", reenact.model)->required()->check(CLI::ExistingFile);
    reenact_cmd->add_option("--source-fit", reenact.source)->required()->check(CLI::ExistingFile);
    reenact_cmd->add_option("--target-fit", reenact.target, "Fit carrying the target identity")
        ->required()
        ->check(CLI::ExistingFile);
    reenact_cmd->add_option("--out", reenact.out, "Directory for NMFC frames and fit.json")->required();
    reenact_cmd->add_option("--size", reenact.size, "Square output resolution")->check(CLI::PositiveNumber);
    reenact_cmd->add_option("--scale-policy", reenact.scale_policy)->check(CLI::IsMember({"keep", "none"}));

    TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train-init", "Multi-person training");
    train_cmd->add_option("--data", train.data, "Dataset directory with nmfc/, repeat per person")
        ->required()
        ->check(CLI::ExistingDirectory);
    train_cmd->add_option("--out", train.out)->required();
    train_cmd->add_option("--log", train.log, "CSV loss log");
    train_cmd->add_option("--train-config", train.train_config)->check(CLI::ExistingFile);
    train_cmd->add_option("--steps", train.steps)->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--lr", train.lr)->check(CLI::PositiveNumber);
    train_cmd->add_option("--channels", train.channels)->check(CLI::PositiveNumber);
    train_cmd->add_option("--n-f", train.n_f)->check(CLI::PositiveNumber);

    TrainArgs tune;
    CLI::App* tune_cmd = app.add_subcommand("finetune", "Person-specific fine-tuning");
    tune_cmd->add_option("--checkpoint", tune.checkpoint)->required()->check(CLI::ExistingFile);
    tune_cmd->add_option("--data", tune.data)->required()->expected(1)->check(CLI::ExistingDirectory);
    tune_cmd->add_option("--out", tune.out)->required();
    tune_cmd->add_option("--log", tune.log, "CSV loss log");
    tune_cmd->add_option("--train-config", tune.train_config)->check(CLI::ExistingFile);
    tune_cmd->add_option("--steps", tune.steps)->check(CLI::NonNegativeNumber);
    tune_cmd->add_option("--lr", tune.lr)->check(CLI::PositiveNumber);
    tune_cmd->add_option("--test-len", tune.test_len, "Trailing frames held out")->check(CLI::NonNegativeNumber);

    RenderArgs render;
    CLI::App* render_cmd = app.add_subcommand("render", "Synthesize frames from NMFC images");
    render_cmd->add_option("--checkpoint", render.checkpoint)->required()->check(CLI::ExistingFile);
    render_cmd->add_option("--nmfc", render.nmfc)->required()->check(CLI::ExistingDirectory);
    render_cmd->add_option("--out", render.out)->required();
    render_cmd->add_option("--background", render.background, "PNG frames composited behind the head")
        ->check(CLI::ExistingDirectory);
    render_cmd->add_option("--reference", render.reference, "Dataset of the target person (adaptive checkpoints)")
        ->check(CLI::ExistingDirectory);

    MetricsArgs metrics;
    CLI::App* metrics_cmd = app.add_subcommand("metrics", "Compare synthesized and real frames");
    metrics_cmd->add_option("--fake", metrics.fake)->required()->check(CLI::ExistingDirectory);
    metrics_cmd->add_option("--real", metrics.real)->required()->check(CLI::ExistingDirectory);
    metrics_cmd->add_option("--masks", metrics.masks, "Ground-truth masks")->check(CLI::ExistingDirectory);
    metrics_cmd->add_option("--pred-masks", metrics.predicted_masks)->check(CLI::ExistingDirectory);
    metrics_cmd->add_option("--out", metrics.out, "JSON report");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try
    {
        if (*synth_cmd)
            run_synth(synth, g, out);
        else if (*fit_cmd)
            run_fit(fit, g, out);
        else if (*nmfc_cmd)
            run_nmfc(nmfc, g, out);
        else if (*reenact_cmd)
            run_reenact(reenact, g, out);
        else if (*train_cmd)
            run_train_init(train, g, out);
        else if (*tune_cmd)
            run_finetune(tune, g, out);
        else if (*render_cmd)
            run_render(render, out);
        else if (*metrics_cmd)
            run_metrics(metrics, g, out);
    }
    catch (const std::exception& e)
    {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace headswap
