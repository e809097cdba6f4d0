#include "flashdistill/experiment.hpp"

#include <algorithm>
#include <iostream>

#include "flashdistill/checkpoint.hpp"
#include "flashdistill/error.hpp"
#include "flashdistill/io.hpp"
#include "flashdistill/metrics.hpp"
#include "flashdistill/teacher.hpp"

namespace flashdistill {

namespace {

const std::map<std::string, std::string> kTeacherDefaults = {
    {"run_id", "teacher"},      {"output_dir", "runs"},
    {"dataset", "ring8"},       {"n_train", "20000"},
    {"steps", "20000"},         {"batch", "256"},
    {"lr", "0.001"},            {"cond_drop_prob", "0.1"},
    {"T", "1000"},              {"zero_terminal_snr", "false"},
    {"width", "64"},            {"depth", "3"},
    {"time_dim", "32"},         {"cond_dim", "16"},
    {"seed", "1"},              {"log_every", "25"},
};

const std::map<std::string, std::string> kDistillDefaults = {
    {"run_id", "student"},      {"output_dir", "runs"},
    {"teacher", ""},            {"dataset", "ring8"},
    {"n_train", "20000"},       {"mode", "backward"},
    {"srl", "true"},            {"disc", "true"},
    {"srl_reuse_noise", "true"},
    {"noise_correction", "true"},
    {"step_set", "999,750,500"},
    {"gamma", "900:990,500:950,-1:200"},
    {"k", "8"},                 {"cfg_weight", "1.5"},
    {"adv_weight", "0.05"},     {"recon_weight", "1"},
    {"disc_noise", "0.1"},      {"steps", "1500"},
    {"batch", "96"},            {"lr", "0.0003"},
    {"disc_lr", "0.001"},       {"seed", "1"},
    {"log_every", "25"},
};

const std::map<std::string, std::string> kSampleDefaults = {
    {"run_id", "sample"},       {"output_dir", "runs"},
    {"ckpt", ""},               {"n", "4096"},
    {"step_set", "999,750,500"},
    {"noise_correction", "true"},
    {"cfg_weight", "1"},        {"seed", "1"},
    {"labels", "balanced"},
};

const std::map<std::string, std::string> kEvalDefaults = {
    {"run_id", "eval"},         {"output_dir", "runs"},
    {"samples", ""},            {"ckpt", ""},
    {"dataset", "ring8"},       {"n_ref", "10000"},
    {"n_proj", "128"},          {"seed", "1"},
    {"n", "10000"},             {"step_set", "999,750,500"},
    {"noise_correction", "true"},
    {"cfg_weight", "1"},
};

const std::map<std::string, std::string> kAblateDefaults = {
    {"run_id", "ablation"},     {"output_dir", "runs"},
    {"teacher", ""},            {"dataset", "ring8"},
    {"n_train", "20000"},       {"seed", "1"},
    {"step_set", "999,750,500"},
    {"gamma", "900:990,500:950,-1:200"},
    {"srl_reuse_noise", "true"},
    {"k", "8"},                 {"cfg_weight", "1.5"},
    {"adv_weight", "0.05"},     {"recon_weight", "1"},
    {"disc_noise", "0.1"},      {"steps", "1500"},
    {"batch", "96"},            {"lr", "0.0003"},
    {"disc_lr", "0.001"},       {"log_every", "25"},
    {"n_eval", "10000"},        {"n_proj", "128"},
    {"eval_seed", "77"},        {"sample_seed", "33"},
    {"teacher_cfg_weight", "1"},
};

std::string run_dir(const RunConfig& cfg) {
    return cfg.str("output_dir") + "/" + cfg.str("run_id");
}

// Snapshot handling shared by all commands: a matching snapshot plus all
// expected artifacts means the run is already complete; a different snapshot
// under the same run_id is refused; a matching snapshot with artifacts
// missing is a detected partial run and gets redone.
bool run_already_complete(const RunConfig& cfg, const std::vector<std::string>& artifacts) {
    std::string dir = run_dir(cfg);
    std::string snap_path = dir + "/config_resolved.json";
    if (!file_exists(snap_path)) return false;
    if (read_text(snap_path) != cfg.snapshot_json())
        throw ConfigError("run_id '" + cfg.str("run_id") + "' in " + dir +
                          " was produced by a different config");
    for (const std::string& a : artifacts)
        if (!file_exists(dir + "/" + a)) return false;
    return true;
}

void write_snapshot(const RunConfig& cfg) {
    atomic_write_text(run_dir(cfg) + "/config_resolved.json", cfg.snapshot_json());
}

EpsCheckpoint load_required_ckpt(const RunConfig& cfg, const std::string& key) {
    if (!cfg.has(key)) throw ConfigError("config key '" + key + "' is required");
    if (!file_exists(cfg.str(key)))
        throw ConfigError("config key '" + key + "': checkpoint " + cfg.str(key) + " not found");
    return load_eps_checkpoint(cfg.str(key));
}

// Step sets come as an explicit descending list ("999,750,500"), "uniformN"
// for an N-point uniform grid, or "snrN" for an N-point grid with equalized
// per-step signal growth.
std::vector<int> parse_step_set(const RunConfig& cfg, const std::string& key,
                                const NoiseSchedule& sched) {
    const std::string& v = cfg.str(key);
    try {
        if (v.rfind("uniform", 0) == 0) return uniform_step_set(sched.T, std::stoi(v.substr(7)));
        if (v.rfind("snr", 0) == 0) return snr_step_set(sched, std::stoi(v.substr(3)));
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not uniformN or snrN");
    }
    return cfg.int_list(key);
}

DistillConfig distill_config_from(const RunConfig& cfg, const NoiseSchedule& sched) {
    DistillConfig dc;
    std::string mode = cfg.str("mode");
    if (mode == "backward") dc.mode = DistillMode::backward;
    else if (mode == "forward") dc.mode = DistillMode::forward;
    else throw ConfigError("config key 'mode': '" + mode + "' is not forward or backward");
    dc.srl = cfg.flag("srl");
    dc.srl_reuse_noise = cfg.flag("srl_reuse_noise");
    dc.disc = cfg.flag("disc");
    dc.noise_correction = cfg.flag("noise_correction");
    dc.step_set = parse_step_set(cfg, "step_set", sched);
    dc.gamma = cfg.gamma_table("gamma");
    dc.k = int(cfg.i64("k"));
    dc.cfg_weight = cfg.dbl("cfg_weight");
    dc.adv_weight = cfg.dbl("adv_weight");
    dc.recon_weight = cfg.dbl("recon_weight");
    dc.disc_noise = cfg.dbl("disc_noise");
    dc.seed = cfg.u64("seed");
    return dc;
}

std::string distill_csv(const std::vector<DistillMetricsRow>& rows) {
    CsvWriter csv({"step", "recon_loss", "g_loss", "d_loss"});
    for (const DistillMetricsRow& r : rows)
        csv.row({std::to_string(r.step), format_double(r.recon), format_double(r.g_loss),
                 format_double(r.d_loss)});
    return csv.text();
}

std::vector<int> parse_labels(const RunConfig& cfg, std::size_t n, int n_classes) {
    if (cfg.str("labels") == "balanced") return balanced_labels(n_classes, n);
    std::vector<int> given = cfg.int_list("labels");
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = given[i % given.size()];
    return out;
}

struct EvalNumbers {
    double sw;
    double mode_recall;
    double cond_fidelity;
};

EvalNumbers eval_samples(const Tensor& samples, const std::vector<int>& requested,
                         const MixtureSpec& spec, const Tensor& reference, int n_proj,
                         std::uint64_t seed) {
    EvalNumbers out;
    out.sw = sliced_wasserstein(samples, reference, n_proj, seed);
    out.mode_recall = mode_coverage(samples, spec).recall;
    out.cond_fidelity = condition_fidelity(samples, requested, spec);
    return out;
}

}  // namespace

const std::map<std::string, std::string>& default_config(const std::string& command) {
    if (command == "train-teacher") return kTeacherDefaults;
    if (command == "distill") return kDistillDefaults;
    if (command == "sample") return kSampleDefaults;
    if (command == "eval") return kEvalDefaults;
    if (command == "ablate") return kAblateDefaults;
    throw ConfigError("unknown command '" + command +
                      "' (want train-teacher, distill, sample, eval or ablate)");
}

std::string cmd_train_teacher(const RunConfig& cfg) {
    std::string dir = run_dir(cfg);
    // The checkpoint is written after every segment, so completeness also
    // needs the stored step count to have reached the target.
    if (run_already_complete(cfg, {"teacher.ckpt", "teacher_loss.csv"}) &&
        load_eps_checkpoint(dir + "/teacher.ckpt").train_step >= cfg.i64("steps"))
        return dir;

    MixtureSpec spec = make_by_name(cfg.str("dataset"));
    write_snapshot(cfg);
    Dataset data = gen_dataset(spec, std::size_t(cfg.i64("n_train")), cfg.u64("seed"));
    NoiseSchedule sched =
        build_schedule(int(cfg.i64("T")), ScheduleKind::cosine, cfg.flag("zero_terminal_snr"));
    EpsMlpConfig mc{2, spec.n_classes(), int(cfg.i64("width")), int(cfg.i64("depth")),
                    int(cfg.i64("time_dim")), int(cfg.i64("cond_dim"))};
    TeacherHyper hyper{cfg.i64("steps"), int(cfg.i64("batch")), cfg.dbl("lr"),
                       cfg.dbl("cond_drop_prob"), cfg.i64("log_every")};

    std::string ckpt_path = dir + "/teacher.ckpt";
    std::string csv_path = dir + "/teacher_loss.csv";
    TeacherRun run;
    std::string csv = CsvWriter({"step", "loss"}).text();
    if (file_exists(ckpt_path)) {
        // Interrupted run: pick the training up from the stored step.
        EpsCheckpoint ckpt = load_eps_checkpoint(ckpt_path);
        run.model = std::move(ckpt.model);
        if (ckpt.opt) run.opt = *ckpt.opt;
        run.step = ckpt.train_step;
        run.seed = ckpt.seed;
        if (file_exists(csv_path)) csv = read_text(csv_path);
    } else {
        run.seed = cfg.u64("seed");
        run.model = EpsModel::init(mc, run.seed);
        run.opt = AdamState::init(run.model.params(), AdamHyper{hyper.lr, 0.9, 0.999, 1e-8});
    }

    // Train in segments and persist after each, so an interrupted run loses
    // at most one segment.
    const long segment = 5000;
    while (true) {
        TeacherHyper upto = hyper;
        upto.steps = std::min(hyper.steps, run.step + segment);
        run.rows.clear();
        resume_teacher(run, data, sched, upto);
        for (const TrainLogRow& r : run.rows)
            csv += std::to_string(r.step) + "," + format_double(r.loss) + "\r\n";

        EpsCheckpoint out;
        out.model = run.model;
        out.T = sched.T;
        out.zero_terminal_snr = sched.zero_terminal_snr;
        out.train_step = run.step;
        out.seed = run.seed;
        out.opt = run.opt;
        save_eps_checkpoint(ckpt_path, out);
        atomic_write_text(csv_path, csv);
        if (run.step >= hyper.steps) break;
    }
    return dir;
}

std::string cmd_distill(const RunConfig& cfg) {
    std::string dir = run_dir(cfg);
    if (run_already_complete(cfg, {"student.ckpt", "distill_metrics.csv"})) return dir;

    EpsCheckpoint teacher = load_required_ckpt(cfg, "teacher");
    NoiseSchedule sched = teacher.schedule();
    MixtureSpec spec = make_by_name(cfg.str("dataset"));
    write_snapshot(cfg);
    Dataset data = gen_dataset(spec, std::size_t(cfg.i64("n_train")), cfg.u64("seed"));

    DistillConfig dc = distill_config_from(cfg, sched);
    DistillHyper hyper{cfg.i64("steps"), int(cfg.i64("batch")), cfg.dbl("lr"),
                       cfg.dbl("disc_lr"), cfg.i64("log_every")};
    DistillRun run = distill_train(teacher.model, data, dc, hyper, sched);

    EpsCheckpoint out;
    out.model = run.student;
    out.T = sched.T;
    out.zero_terminal_snr = sched.zero_terminal_snr;
    out.train_step = run.step;
    out.seed = dc.seed;
    save_eps_checkpoint(dir + "/student.ckpt", out);
    atomic_write_text(dir + "/distill_metrics.csv", distill_csv(run.rows));
    if (dc.disc) {
        DiscCheckpoint disc{run.disc, run.step, dc.seed, run.disc_opt};
        save_disc_checkpoint(dir + "/disc.ckpt", disc);
    }
    return dir;
}

std::string cmd_sample(const RunConfig& cfg) {
    std::string dir = run_dir(cfg);
    if (run_already_complete(cfg, {"samples.csv", "samples.svg"})) return dir;

    EpsCheckpoint ckpt = load_required_ckpt(cfg, "ckpt");
    NoiseSchedule sched = ckpt.schedule();
    ModelEpsSource src(ckpt.model);
    write_snapshot(cfg);

    SamplerConfig sc;
    sc.step_set = parse_step_set(cfg, "step_set", sched);
    sc.cfg_weight = cfg.dbl("cfg_weight");
    sc.noise_correction = cfg.flag("noise_correction");
    sc.seed = cfg.u64("seed");
    std::size_t n = std::size_t(cfg.i64("n"));
    std::vector<int> labels = parse_labels(cfg, n, ckpt.model.cfg.n_classes);

    SampleRun run = sample(src, sched, sc, labels, ckpt.model.cfg.sample_dim);
    atomic_write_text(dir + "/samples.csv", samples_to_csv(run.samples, labels));
    atomic_write_text(dir + "/samples.svg", samples_to_svg(run.samples, labels));
    return dir;
}

std::string cmd_eval(const RunConfig& cfg) {
    std::string dir = run_dir(cfg);
    if (run_already_complete(cfg, {"eval.csv"})) return dir;

    MixtureSpec spec = make_by_name(cfg.str("dataset"));
    if (cfg.has("samples") && !file_exists(cfg.str("samples")))
        throw ConfigError("config key 'samples': file " + cfg.str("samples") + " not found");
    write_snapshot(cfg);
    std::uint64_t seed = cfg.u64("seed");
    Tensor reference = gen_dataset(spec, std::size_t(cfg.i64("n_ref")), seed ^ 0x5eedull).samples;

    Tensor samples;
    std::vector<int> labels;
    if (cfg.has("samples")) {
        Dataset ds = samples_from_csv(read_text(cfg.str("samples")));
        samples = ds.samples;
        labels = ds.labels;
    } else {
        EpsCheckpoint ckpt = load_required_ckpt(cfg, "ckpt");
        NoiseSchedule sched = ckpt.schedule();
        ModelEpsSource src(ckpt.model);
        SamplerConfig sc;
        sc.step_set = parse_step_set(cfg, "step_set", sched);
        sc.cfg_weight = cfg.dbl("cfg_weight");
        sc.noise_correction = cfg.flag("noise_correction");
        sc.seed = seed;
        labels = balanced_labels(ckpt.model.cfg.n_classes, std::size_t(cfg.i64("n")));
        samples = sample(src, sched, sc, labels, ckpt.model.cfg.sample_dim).samples;
    }

    EvalNumbers numbers =
        eval_samples(samples, labels, spec, reference, int(cfg.i64("n_proj")), seed);
    CsvWriter csv({"run_id", "metric", "value", "seed"});
    std::string run_id = cfg.str("run_id");
    std::string seed_str = std::to_string(seed);
    csv.row({run_id, "sliced_wasserstein", format_double(numbers.sw), seed_str});
    csv.row({run_id, "mode_recall", format_double(numbers.mode_recall), seed_str});
    csv.row({run_id, "condition_fidelity", format_double(numbers.cond_fidelity), seed_str});
    atomic_write_text(dir + "/eval.csv", csv.text());
    return dir;
}

std::string cmd_ablate(const RunConfig& cfg) {
    std::string dir = run_dir(cfg);
    if (run_already_complete(cfg, {"ablation.csv"})) return dir;

    EpsCheckpoint teacher = load_required_ckpt(cfg, "teacher");
    NoiseSchedule sched = teacher.schedule();
    MixtureSpec spec = make_by_name(cfg.str("dataset"));
    write_snapshot(cfg);
    Dataset data = gen_dataset(spec, std::size_t(cfg.i64("n_train")), cfg.u64("seed"));
    Tensor reference =
        gen_dataset(spec, std::size_t(cfg.i64("n_eval")), cfg.u64("eval_seed")).samples;

    int n_proj = int(cfg.i64("n_proj"));
    std::uint64_t eval_seed = cfg.u64("eval_seed");
    std::uint64_t sample_seed = cfg.u64("sample_seed");
    std::size_t n_eval = std::size_t(cfg.i64("n_eval"));
    std::vector<int> step_set = parse_step_set(cfg, "step_set", sched);
    int n_classes = teacher.model.cfg.n_classes;
    std::vector<int> labels = balanced_labels(n_classes, n_eval);

    CsvWriter csv({"variant", "seed", "n_steps", "sliced_wasserstein", "mode_recall",
                   "condition_fidelity"});
    std::string seed_str = std::to_string(cfg.u64("seed"));

    auto eval_model = [&](const EpsModel& model, const std::vector<int>& steps, double w,
                          bool correction) {
        SamplerConfig sc;
        sc.step_set = steps;
        sc.cfg_weight = w;
        sc.noise_correction = correction;
        sc.seed = sample_seed;
        ModelEpsSource src(model);
        Tensor samples = sample(src, sched, sc, labels, model.cfg.sample_dim).samples;
        return eval_samples(samples, labels, spec, reference, n_proj, eval_seed);
    };

    auto add_row = [&](const std::string& variant, std::size_t n_steps, const EvalNumbers& e) {
        csv.row({variant, seed_str, std::to_string(n_steps), format_double(e.sw),
                 format_double(e.mode_recall), format_double(e.cond_fidelity)});
    };

    // Teacher baselines: plain DDIM at 25 steps and at the student grid.
    double tw = cfg.dbl("teacher_cfg_weight");
    add_row("teacher_25step", 25, eval_model(teacher.model, uniform_step_set(sched.T, 25), tw, false));
    add_row("teacher_" + std::to_string(step_set.size()) + "step", step_set.size(),
            eval_model(teacher.model, step_set, tw, false));

    struct Variant {
        const char* name;
        void (*tweak)(DistillConfig&);
    };
    const Variant variants[] = {
        {"full", [](DistillConfig&) {}},
        {"no_noise_correction", [](DistillConfig& c) { c.noise_correction = false; }},
        {"no_discriminator", [](DistillConfig& c) { c.disc = false; }},
        {"no_backward_distillation", [](DistillConfig& c) { c.mode = DistillMode::forward; }},
        // reconstruction-free: the adversarial signal alone drives training
        {"no_srl", [](DistillConfig& c) { c.recon_weight = 0.0; }},
    };

    DistillHyper hyper{cfg.i64("steps"), int(cfg.i64("batch")), cfg.dbl("lr"),
                       cfg.dbl("disc_lr"), cfg.i64("log_every")};

    for (const Variant& variant : variants) {
        DistillConfig dc;
        dc.step_set = step_set;
        dc.gamma = cfg.gamma_table("gamma");
        dc.srl_reuse_noise = cfg.flag("srl_reuse_noise");
        dc.k = int(cfg.i64("k"));
        dc.cfg_weight = cfg.dbl("cfg_weight");
        dc.adv_weight = cfg.dbl("adv_weight");
        dc.recon_weight = cfg.dbl("recon_weight");
        dc.disc_noise = cfg.dbl("disc_noise");
        dc.seed = cfg.u64("seed");
        variant.tweak(dc);

        std::string vdir = dir + "/" + variant.name;
        std::string ckpt_path = vdir + "/student.ckpt";
        EpsModel student;
        if (file_exists(ckpt_path)) {
            student = load_eps_checkpoint(ckpt_path).model;
        } else {
            DistillRun run = distill_train(teacher.model, data, dc, hyper, sched);
            student = run.student;
            EpsCheckpoint out;
            out.model = student;
            out.T = sched.T;
            out.zero_terminal_snr = sched.zero_terminal_snr;
            out.train_step = run.step;
            out.seed = dc.seed;
            save_eps_checkpoint(ckpt_path, out);
            atomic_write_text(vdir + "/distill_metrics.csv", distill_csv(run.rows));
        }
        add_row(variant.name, step_set.size(),
                eval_model(student, step_set, 1.0, dc.noise_correction));
    }

    atomic_write_text(dir + "/ablation.csv", csv.text());
    return dir;
}

int run_cli(int argc, const char* const* argv) {
    auto usage = []() {
        std::cerr << "usage: flashdistill <train-teacher|distill|sample|eval|ablate> "
                     "[--config file.json] [--key value]...\n";
    };
    try {
        if (argc < 2) {
            usage();
            return 1;
        }
        std::string command = argv[1];
        if (command == "--help" || command == "-h" || command == "help") {
            usage();
            return 0;
        }
        const auto& defaults = default_config(command);

        std::string config_path;
        std::vector<std::pair<std::string, std::string>> overrides;
        for (int i = 2; i < argc; ++i) {
            std::string arg = argv[i];
            if (arg.rfind("--", 0) != 0)
                throw ConfigError("expected --key, got '" + arg + "'");
            if (i + 1 >= argc) throw ConfigError("missing value for '" + arg + "'");
            std::string value = argv[++i];
            if (arg == "--config") config_path = value;
            else overrides.emplace_back(arg.substr(2), value);
        }

        RunConfig cfg = RunConfig::resolve(defaults, config_path, overrides);
        std::string dir;
        if (command == "train-teacher") dir = cmd_train_teacher(cfg);
        else if (command == "distill") dir = cmd_distill(cfg);
        else if (command == "sample") dir = cmd_sample(cfg);
        else if (command == "eval") dir = cmd_eval(cfg);
        else dir = cmd_ablate(cfg);
        std::cout << dir << "\n";
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace flashdistill
