// Command-line surface for the unmixing toolkit: synthetic scenes, VCA,
// FCLSU, model training, metric evaluation, hyperparameter sweeps, and
// bit-exact re-runs from recorded run.json files.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "unmix/unmix.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json run_record(const std::string& command, const json& options) {
    return json{{"tool", "unmix"}, {"version", unmix::kVersion}, {"command", command}, {"options", options}};
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOptions {
    std::string out;
    std::int64_t B = 64, H = 32, W = 32, R = 3;
    double snr = 30.0;
    double alpha = 1.0;
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

json to_json(const SynthOptions& o) {
    return json{{"out", o.out}, {"B", o.B},         {"H", o.H},     {"W", o.W},
                {"R", o.R},     {"snr", o.snr},     {"alpha", o.alpha},
                {"sigma", o.sigma},                 {"seed", o.seed}};
}

SynthOptions synth_from_json(const json& j) {
    SynthOptions o;
    o.out = j.at("out");
    o.B = j.at("B");
    o.H = j.at("H");
    o.W = j.at("W");
    o.R = j.at("R");
    o.snr = j.at("snr");
    o.alpha = j.at("alpha");
    o.sigma = j.at("sigma");
    o.seed = j.at("seed");
    return o;
}

int run_synth(const SynthOptions& o) {
    unmix::SceneConfig cfg;
    cfg.B = o.B;
    cfg.H = o.H;
    cfg.W = o.W;
    cfg.R = o.R;
    cfg.snr_db = o.snr;
    cfg.dirichlet_alpha = o.alpha;
    cfg.smoothing_sigma = o.sigma;
    cfg.seed = o.seed;
    unmix::Scene scene = unmix::synth_scene(cfg);

    fs::create_directories(o.out);
    unmix::write_hsic(scene.cube, fs::path(o.out) / "cube.hsic");
    unmix::write_endmembers_csv(scene.endmembers, scene.cube.wavelengths, fs::path(o.out) / "E.csv");
    unmix::write_abundance_hsic(scene.abundances, scene.endmembers.names, fs::path(o.out) / "A.hsic");
    unmix::write_json_file(run_record("synth", to_json(o)), fs::path(o.out) / "run.json");
    std::cout << "wrote " << o.out << "/{cube.hsic, E.csv, A.hsic, run.json} (" << o.B << "x" << o.H
              << "x" << o.W << ", R=" << o.R << ", SNR=" << o.snr << " dB)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// vca
// ---------------------------------------------------------------------------

struct VcaOptions {
    std::string in;
    std::int64_t r = 3;
    std::uint64_t seed = 0;
    std::string out;
};

json to_json(const VcaOptions& o) {
    return json{{"in", o.in}, {"r", o.r}, {"seed", o.seed}, {"out", o.out}};
}

VcaOptions vca_from_json(const json& j) {
    VcaOptions o;
    o.in = j.at("in");
    o.r = j.at("r");
    o.seed = j.at("seed");
    o.out = j.at("out");
    return o;
}

int run_vca(const VcaOptions& o) {
    const unmix::HsiCube cube = unmix::read_hsic(o.in);
    const auto result = unmix::vca(cube, o.r, o.seed);
    unmix::write_endmembers_csv(result.endmembers, cube.wavelengths, o.out);
    unmix::write_json_file(run_record("vca", to_json(o)), o.out + ".run.json");
    std::cout << "vca: extracted " << o.r << " endmembers from " << o.in << " -> " << o.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// fclsu
// ---------------------------------------------------------------------------

struct FclsuOptions {
    std::string in;
    std::string endmembers;
    std::string out;
};

json to_json(const FclsuOptions& o) {
    return json{{"in", o.in}, {"endmembers", o.endmembers}, {"out", o.out}};
}

FclsuOptions fclsu_from_json(const json& j) {
    FclsuOptions o;
    o.in = j.at("in");
    o.endmembers = j.at("endmembers");
    o.out = j.at("out");
    return o;
}

int run_fclsu(const FclsuOptions& o) {
    const unmix::HsiCube cube = unmix::read_hsic(o.in);
    const auto em = unmix::read_endmembers_csv(o.endmembers);
    const unmix::AbundanceCube a = unmix::fclsu(cube, em.endmembers);
    unmix::write_abundance_hsic(a, em.endmembers.names, o.out);
    unmix::write_json_file(run_record("fclsu", to_json(o)), o.out + ".run.json");
    const auto report = unmix::validate(a);
    std::cout << "fclsu: " << cube.pixels() << " pixels, max ANC violation " << report.max_negative
              << ", max ASC deviation " << report.max_sum_deviation << " -> " << o.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
    std::string in;
    std::string profile = "samson";
    std::string out = "train_out";
    std::int64_t epochs_override = 0;  // 0 = use profile
    std::int64_t seed_override = -1;   // <0 = use profile
    bool dry_run = false;
};

unmix::Profile resolve_profile(const TrainOptions& o) {
    unmix::Profile pr = unmix::load_profile(o.profile);
    if (o.epochs_override > 0) pr.epochs = o.epochs_override;
    if (o.seed_override >= 0) pr.seed = static_cast<std::uint64_t>(o.seed_override);
    return pr;
}

json to_json(const TrainOptions& o) {
    return json{{"in", o.in},
                {"profile", unmix::profile_to_json(resolve_profile(o))},
                {"out", o.out},
                {"dry_run", o.dry_run}};
}

TrainOptions train_from_json(const json& j, unmix::Profile& pr) {
    TrainOptions o;
    o.in = j.at("in");
    o.out = j.at("out");
    o.dry_run = j.value("dry_run", false);
    pr = unmix::profile_from_json(j.at("profile"));
    return o;
}

int train_with_profile(const TrainOptions& o, const unmix::Profile& pr) {
    const unmix::HsiCube cube = unmix::read_hsic(o.in);
    unmix::ModelConfig mc = pr.model_config(cube.bands, cube.height, cube.width);
    mc.validate();
    unmix::TrainConfig tc = pr.train_config();
    tc.validate();

    fs::create_directories(o.out);
    json record = run_record("train", json{{"in", o.in},
                                           {"profile", unmix::profile_to_json(pr)},
                                           {"out", o.out},
                                           {"dry_run", o.dry_run}});
    unmix::write_json_file(record, fs::path(o.out) / "run.json");

    if (o.dry_run) {
        std::cout << "train (dry run): profile \"" << pr.name << "\" resolved to p=" << pr.p
                  << " C=" << pr.C << " h_n=" << pr.h_n << " R=" << pr.R << " beta=" << pr.beta
                  << " gamma=" << pr.gamma << " epochs=" << pr.epochs << " lr0=" << pr.lr0
                  << " weight_decay=" << pr.weight_decay << " seed=" << pr.seed << "\n";
        return 0;
    }

    const auto vca_result = unmix::vca(cube, mc.R, pr.seed);
    unmix::RngStream init_rng = unmix::RngStream(pr.seed).split(1);
    unmix::ModelParams mp = unmix::init_params(mc, vca_result.endmembers.E, init_rng);

    const unmix::TrainHistory history = unmix::train(cube, mp, mc, tc);

    unmix::NoGradGuard guard;
    const auto out = unmix::forward(cube, mp, mc, unmix::RunMode::kEval);
    const unmix::AbundanceCube abundances = unmix::abundances_to_cube(out.abundances);
    const unmix::EndmemberMatrix endmembers = unmix::decoder_to_endmembers(out.endmembers);

    unmix::save_checkpoint(mp, mc, fs::path(o.out) / "checkpoint.umck");
    unmix::write_history_csv(history, fs::path(o.out) / "history.csv");
    unmix::write_endmembers_csv(endmembers, cube.wavelengths, fs::path(o.out) / "E_hat.csv");
    unmix::write_abundance_hsic(abundances, {}, fs::path(o.out) / "A_hat.hsic");
    unmix::export_abundance_pgm(abundances, fs::path(o.out) / "maps");

    std::cout << "train: " << tc.epochs << " epochs in " << history.wall_seconds << " s, loss "
              << history.total.front() << " -> " << history.total.back() << "\n"
              << "wrote " << o.out << "/{checkpoint.umck, history.csv, E_hat.csv, A_hat.hsic, maps/}\n";
    return 0;
}

int run_train(const TrainOptions& o) { return train_with_profile(o, resolve_profile(o)); }

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOptions {
    std::string pred_a, ref_a;
    std::string pred_e, ref_e;
    bool degrees = false;
    std::string out;  // optional table CSV
};

json to_json(const EvalOptions& o) {
    return json{{"pred_a", o.pred_a}, {"ref_a", o.ref_a}, {"pred_e", o.pred_e},
                {"ref_e", o.ref_e},   {"degrees", o.degrees}, {"out", o.out}};
}

EvalOptions eval_from_json(const json& j) {
    EvalOptions o;
    o.pred_a = j.at("pred_a");
    o.ref_a = j.at("ref_a");
    o.pred_e = j.at("pred_e");
    o.ref_e = j.at("ref_e");
    o.degrees = j.at("degrees");
    o.out = j.value("out", std::string());
    return o;
}

/// Exhaustive permutation minimizing total squared abundance error (used when
/// no endmember pair is available to anchor the match).
unmix::Permutation match_by_abundance(const unmix::AbundanceCube& pred, const unmix::AbundanceCube& ref) {
    const std::int64_t r = ref.count;
    if (r > 8) throw unmix::ConfigError("eval: abundance matching supports R <= 8");
    const std::int64_t n = ref.pixels();
    Eigen::MatrixXd cost(r, r);
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < r; ++j) {
            double s = 0.0;
            for (std::int64_t px = 0; px < n; ++px) {
                const double d = pred.data[static_cast<std::size_t>(j * n + px)] -
                                 ref.data[static_cast<std::size_t>(i * n + px)];
                s += d * d;
            }
            cost(i, j) = s;
        }
    std::vector<std::int64_t> perm(static_cast<std::size_t>(r));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<std::int64_t> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (std::int64_t i = 0; i < r; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]);
        if (c < best_cost) {
            best_cost = c;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return unmix::Permutation{best};
}

int run_eval(const EvalOptions& o) {
    const bool have_a = !o.pred_a.empty() && !o.ref_a.empty();
    const bool have_e = !o.pred_e.empty() && !o.ref_e.empty();
    if (!have_a && !have_e)
        throw unmix::ConfigError("eval: need --pred-a/--ref-a and/or --pred-e/--ref-e");

    std::optional<unmix::AbundanceCube> pred_a, ref_a;
    std::optional<unmix::EndmemberMatrix> pred_e, ref_e;
    if (have_a) {
        pred_a = unmix::read_abundance_hsic(o.pred_a);
        ref_a = unmix::read_abundance_hsic(o.ref_a);
    }
    if (have_e) {
        pred_e = unmix::read_endmembers_csv(o.pred_e).endmembers;
        ref_e = unmix::read_endmembers_csv(o.ref_e).endmembers;
    }

    unmix::Permutation perm;
    if (have_e)
        perm = unmix::match_endmembers(*pred_e, *ref_e);
    else
        perm = match_by_abundance(*pred_a, *ref_a);

    std::optional<unmix::RmseReport> rmse_rep;
    std::optional<unmix::SadReport> sad_rep;
    std::int64_t r = 0;
    std::vector<std::string> class_names;
    if (have_e) {
        const auto aligned = unmix::apply_permutation(*pred_e, perm);
        sad_rep = unmix::sad(aligned, *ref_e);
        r = ref_e->count();
        for (std::int64_t i = 0; i < r; ++i) class_names.push_back(ref_e->name_of(i));
    }
    if (have_a) {
        const auto aligned = unmix::apply_permutation(*pred_a, perm);
        rmse_rep = unmix::rmse(aligned, *ref_a);
        if (r == 0) {
            r = ref_a->count;
            for (std::int64_t i = 0; i < r; ++i) class_names.push_back("em" + std::to_string(i + 1));
        }
    }

    const double sad_unit = o.degrees ? 180.0 / M_PI : 1.0;
    const char* sad_label = o.degrees ? "SAD(deg)" : "SAD(rad)";

    std::printf("%-12s", "class");
    if (rmse_rep) std::printf("  %12s", "RMSE");
    if (sad_rep) std::printf("  %12s", sad_label);
    std::printf("\n");
    for (std::int64_t i = 0; i < r; ++i) {
        std::printf("%-12s", class_names[static_cast<std::size_t>(i)].c_str());
        if (rmse_rep) std::printf("  %12.6f", rmse_rep->per_endmember[static_cast<std::size_t>(i)]);
        if (sad_rep) std::printf("  %12.6f", sad_rep->per_endmember[static_cast<std::size_t>(i)] * sad_unit);
        std::printf("\n");
    }
    std::printf("%-12s", "overall");
    if (rmse_rep) std::printf("  %12.6f", rmse_rep->overall);
    if (sad_rep) std::printf("  %12.6f", sad_rep->mean * sad_unit);
    std::printf("\n");

    if (!o.out.empty()) {
        std::ofstream csv(o.out);
        if (!csv) throw unmix::FormatError("eval: cannot open " + o.out + " for writing");
        csv << "class";
        if (rmse_rep) csv << ",rmse";
        if (sad_rep) csv << (o.degrees ? ",sad_deg" : ",sad_rad");
        csv << "\n";
        for (std::int64_t i = 0; i < r; ++i) {
            csv << class_names[static_cast<std::size_t>(i)];
            if (rmse_rep) csv << "," << rmse_rep->per_endmember[static_cast<std::size_t>(i)];
            if (sad_rep) csv << "," << sad_rep->per_endmember[static_cast<std::size_t>(i)] * sad_unit;
            csv << "\n";
        }
        csv << "overall";
        if (rmse_rep) csv << "," << rmse_rep->overall;
        if (sad_rep) csv << "," << sad_rep->mean * sad_unit;
        csv << "\n";
        unmix::write_json_file(run_record("eval", to_json(o)), o.out + ".run.json");
    }
    return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepOptions {
    std::string param = "gamma";
    std::vector<double> values;
    std::string in;
    std::string profile;
    std::string ref_e, ref_a;
    std::string out = "sweep.csv";
    std::int64_t epochs_override = 0;
};

json to_json(const SweepOptions& o) {
    return json{{"param", o.param}, {"values", o.values},   {"in", o.in},
                {"profile", o.profile}, {"ref_e", o.ref_e}, {"ref_a", o.ref_a},
                {"out", o.out},     {"epochs_override", o.epochs_override}};
}

SweepOptions sweep_from_json(const json& j) {
    SweepOptions o;
    o.param = j.at("param");
    o.values = j.at("values").get<std::vector<double>>();
    o.in = j.at("in");
    o.profile = j.at("profile");
    o.ref_e = j.at("ref_e");
    o.ref_a = j.at("ref_a");
    o.out = j.at("out");
    o.epochs_override = j.at("epochs_override");
    return o;
}

int run_sweep(const SweepOptions& o) {
    if (o.values.empty()) throw unmix::ConfigError("sweep: --values must list at least one value");
    if (o.param != "gamma" && o.param != "lr" && o.param != "weight_decay")
        throw unmix::ConfigError("sweep: --param must be gamma, lr, or weight_decay");

    const unmix::HsiCube cube = unmix::read_hsic(o.in);
    const auto ref_e = unmix::read_endmembers_csv(o.ref_e).endmembers;
    const auto ref_a = unmix::read_abundance_hsic(o.ref_a);

    unmix::Profile base = unmix::load_profile(o.profile);
    if (o.epochs_override > 0) base.epochs = o.epochs_override;

    std::ofstream csv(o.out);
    if (!csv) throw unmix::FormatError("sweep: cannot open " + o.out + " for writing");
    csv << o.param << ",rmse_overall,sad_mean\n";

    for (const double value : o.values) {
        unmix::Profile pr = base;
        if (o.param == "gamma") pr.gamma = value;
        if (o.param == "lr") pr.lr0 = value;
        if (o.param == "weight_decay") pr.weight_decay = value;

        unmix::ModelConfig mc = pr.model_config(cube.bands, cube.height, cube.width);
        mc.validate();
        const auto vca_result = unmix::vca(cube, mc.R, pr.seed);
        unmix::RngStream init_rng = unmix::RngStream(pr.seed).split(1);
        unmix::ModelParams mp = unmix::init_params(mc, vca_result.endmembers.E, init_rng);
        unmix::train(cube, mp, mc, pr.train_config());

        unmix::NoGradGuard guard;
        const auto out = unmix::forward(cube, mp, mc, unmix::RunMode::kEval);
        const auto abundances = unmix::abundances_to_cube(out.abundances);
        const auto endmembers = unmix::decoder_to_endmembers(out.endmembers);

        const auto perm = unmix::match_endmembers(endmembers, ref_e);
        const auto rmse_rep = unmix::rmse(unmix::apply_permutation(abundances, perm), ref_a);
        const auto sad_rep = unmix::sad(unmix::apply_permutation(endmembers, perm), ref_e);
        csv << unmix::io_detail::fmt_double(value) << "," << rmse_rep.overall << "," << sad_rep.mean
            << "\n";
        std::cout << "sweep " << o.param << "=" << value << ": rmse=" << rmse_rep.overall
                  << " sad=" << sad_rep.mean << "\n";
    }
    unmix::write_json_file(run_record("sweep", to_json(o)), o.out + ".run.json");
    std::cout << "wrote " << o.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// rerun
// ---------------------------------------------------------------------------

int run_rerun(const std::string& record_path, const std::string& out_override) {
    const json record = unmix::read_json_file(record_path);
    if (!record.contains("command") || !record.contains("options"))
        throw unmix::FormatError("rerun: " + record_path + " is not a run record");
    const std::string command = record.at("command");
    json options = record.at("options");
    if (!out_override.empty()) options["out"] = out_override;

    if (command == "synth") return run_synth(synth_from_json(options));
    if (command == "vca") return run_vca(vca_from_json(options));
    if (command == "fclsu") return run_fclsu(fclsu_from_json(options));
    if (command == "train") {
        unmix::Profile pr;
        TrainOptions o = train_from_json(options, pr);
        return train_with_profile(o, pr);
    }
    if (command == "eval") return run_eval(eval_from_json(options));
    if (command == "sweep") return run_sweep(sweep_from_json(options));
    throw unmix::FormatError("rerun: unknown command \"" + command + "\" in " + record_path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hyperspectral unmixing toolkit: transformer autoencoder, VCA/FCLSU baselines, "
                 "synthetic scenes, and metrics"};
    app.require_subcommand(1);

    SynthOptions synth_opts;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic ground-truth scene");
    synth->add_option("--out", synth_opts.out, "Output directory")->required();
    synth->add_option("--B", synth_opts.B, "Bands");
    synth->add_option("--H", synth_opts.H, "Height");
    synth->add_option("--W", synth_opts.W, "Width");
    synth->add_option("--R", synth_opts.R, "Endmembers");
    synth->add_option("--snr", synth_opts.snr, "Cube SNR in dB");
    synth->add_option("--alpha", synth_opts.alpha, "Dirichlet concentration");
    synth->add_option("--sigma", synth_opts.sigma, "Spatial smoothing sigma (pixels)");
    synth->add_option("--seed", synth_opts.seed, "RNG seed");

    VcaOptions vca_opts;
    auto* vca_cmd = app.add_subcommand("vca", "Vertex component analysis endmember extraction");
    vca_cmd->add_option("--in", vca_opts.in, "Input cube (.hsic)")->required();
    vca_cmd->add_option("--r", vca_opts.r, "Number of endmembers")->required();
    vca_cmd->add_option("--seed", vca_opts.seed, "RNG seed");
    vca_cmd->add_option("--out", vca_opts.out, "Output endmember CSV")->required();

    FclsuOptions fclsu_opts;
    auto* fclsu_cmd = app.add_subcommand("fclsu", "Fully constrained least squares abundances");
    fclsu_cmd->add_option("--in", fclsu_opts.in, "Input cube (.hsic)")->required();
    fclsu_cmd->add_option("--endmembers", fclsu_opts.endmembers, "Endmember CSV")->required();
    fclsu_cmd->add_option("--out", fclsu_opts.out, "Output abundances (.hsic)")->required();

    TrainOptions train_opts;
    auto* train_cmd = app.add_subcommand("train", "Train the transformer unmixing model");
    train_cmd->add_option("--in", train_opts.in, "Input cube (.hsic)")->required();
    train_cmd->add_option("--profile", train_opts.profile, "samson|apex|wdc or profile JSON path")
        ->required();
    train_cmd->add_option("--out", train_opts.out, "Output directory")->required();
    train_cmd->add_option("--epochs", train_opts.epochs_override, "Override profile epoch count");
    train_cmd->add_option("--seed", train_opts.seed_override, "Override profile seed");
    train_cmd->add_flag("--dry-run", train_opts.dry_run, "Resolve config and write run.json only");

    EvalOptions eval_opts;
    auto* eval_cmd = app.add_subcommand("eval", "RMSE/SAD tables against reference data");
    eval_cmd->add_option("--pred-a", eval_opts.pred_a, "Predicted abundances (.hsic)");
    eval_cmd->add_option("--ref-a", eval_opts.ref_a, "Reference abundances (.hsic)");
    eval_cmd->add_option("--pred-e", eval_opts.pred_e, "Predicted endmembers (CSV)");
    eval_cmd->add_option("--ref-e", eval_opts.ref_e, "Reference endmembers (CSV)");
    eval_cmd->add_flag("--degrees", eval_opts.degrees, "Report SAD in degrees instead of radians");
    eval_cmd->add_option("--out", eval_opts.out, "Also write the table as CSV");

    SweepOptions sweep_opts;
    auto* sweep_cmd = app.add_subcommand("sweep", "Grid sweep over gamma, lr, or weight_decay");
    sweep_cmd->add_option("--param", sweep_opts.param, "gamma|lr|weight_decay")->required();
    sweep_cmd->add_option("--values", sweep_opts.values, "Values to sweep")->required()->delimiter(',');
    sweep_cmd->add_option("--in", sweep_opts.in, "Input cube (.hsic)")->required();
    sweep_cmd->add_option("--profile", sweep_opts.profile, "Base profile")->required();
    sweep_cmd->add_option("--ref-e", sweep_opts.ref_e, "Reference endmembers (CSV)")->required();
    sweep_cmd->add_option("--ref-a", sweep_opts.ref_a, "Reference abundances (.hsic)")->required();
    sweep_cmd->add_option("--out", sweep_opts.out, "Output CSV")->required();
    sweep_cmd->add_option("--epochs", sweep_opts.epochs_override, "Override profile epoch count");

    std::string rerun_record, rerun_out;
    auto* rerun_cmd = app.add_subcommand("rerun", "Re-execute a recorded run.json bitwise");
    rerun_cmd->add_option("record", rerun_record, "Path to run.json")->required();
    rerun_cmd->add_option("--out", rerun_out, "Redirect outputs to this directory/file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors -> 1, --help -> 0
    }

    try {
        if (synth->parsed()) return run_synth(synth_opts);
        if (vca_cmd->parsed()) return run_vca(vca_opts);
        if (fclsu_cmd->parsed()) return run_fclsu(fclsu_opts);
        if (train_cmd->parsed()) return run_train(train_opts);
        if (eval_cmd->parsed()) return run_eval(eval_opts);
        if (sweep_cmd->parsed()) return run_sweep(sweep_opts);
        if (rerun_cmd->parsed()) return run_rerun(rerun_record, rerun_out);
    } catch (const unmix::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const unmix::GenerationError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const unmix::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
