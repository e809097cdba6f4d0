#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "flashdistill/checkpoint.hpp"
#include "flashdistill/error.hpp"
#include "flashdistill/experiment.hpp"
#include "flashdistill/io.hpp"
#include "flashdistill/teacher.hpp"

using namespace flashdistill;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("flashdistill_test_" + std::to_string(std::uintmax_t(::getpid())) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& rel = "") const {
        return rel.empty() ? path.string() : (path / rel).string();
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

RunConfig make_cfg(const std::string& command,
                   std::vector<std::pair<std::string, std::string>> overrides) {
    return RunConfig::resolve(default_config(command), "", overrides);
}

}  // namespace

TEST_CASE("atomic write leaves no temp file behind") {
    TempDir dir;
    std::string path = dir.str("sub/file.txt");
    atomic_write_text(path, "hello");
    CHECK(read_text(path) == "hello");
    CHECK(!file_exists(path + ".tmp"));
}

TEST_CASE("csv writer follows rfc 4180 line endings and quoting") {
    CsvWriter csv({"a", "b"});
    csv.row({"1", "needs,quote"});
    csv.row({"2", "has \"quote\""});
    CHECK(csv.text() == "a,b\r\n1,\"needs,quote\"\r\n2,\"has \"\"quote\"\"\"\r\n");
    CHECK_THROWS_AS(csv.row({"only-one"}), Error);
}

TEST_CASE("samples csv round trip") {
    Rng rng(1);
    Tensor s = Tensor::gaussian({20, 2}, rng);
    std::vector<int> labels(20);
    for (std::size_t i = 0; i < 20; ++i) labels[i] = int(i % 8);
    std::string text = samples_to_csv(s, labels);
    Dataset back = samples_from_csv(text);
    CHECK(back.samples.data == s.data);
    CHECK(back.labels == labels);
}

TEST_CASE("svg scatter carries one circle per sample") {
    Rng rng(2);
    Tensor s = Tensor::gaussian({15, 2}, rng);
    std::vector<int> labels(15, 3);
    std::string svg = samples_to_svg(s, labels);
    std::size_t count = 0, pos = 0;
    while ((pos = svg.find("<circle", pos)) != std::string::npos) {
        ++count;
        pos += 7;
    }
    CHECK(count == 15);
    CHECK(svg.find("viewBox=\"0 0 600 600\"") != std::string::npos);
}

TEST_CASE("checkpoints round trip byte for byte") {
    EpsCheckpoint ckpt;
    ckpt.model = EpsModel::init(EpsMlpConfig{2, 8, 8, 2, 6, 4}, 77);
    ckpt.T = 1000;
    ckpt.zero_terminal_snr = true;
    ckpt.train_step = 123;
    ckpt.seed = 99;
    ckpt.opt = AdamState::init(ckpt.model.params(), AdamHyper{});
    (*ckpt.opt).step_count = 5;
    (*ckpt.opt).m[0][0] = 0.125;

    TempDir dir;
    std::string path = dir.str("model.ckpt");
    save_eps_checkpoint(path, ckpt);
    std::string first = read_text(path);

    EpsCheckpoint loaded = load_eps_checkpoint(path);
    save_eps_checkpoint(path, loaded);
    CHECK(read_text(path) == first);

    CHECK(loaded.model.cfg.width == 8);
    CHECK(loaded.train_step == 123);
    CHECK(loaded.opt.has_value());
    CHECK(loaded.opt->m[0][0] == 0.125);
    for (std::size_t i = 0; i < ckpt.model.w.size(); ++i)
        CHECK(loaded.model.w[i].data == ckpt.model.w[i].data);
}

TEST_CASE("checkpoint version mismatch is a hard error") {
    EpsCheckpoint ckpt;
    ckpt.model = EpsModel::init(EpsMlpConfig{2, 3, 4, 1, 4, 2}, 1);
    TempDir dir;
    std::string path = dir.str("model.ckpt");
    save_eps_checkpoint(path, ckpt);
    std::string text = read_text(path);
    std::size_t pos = text.find("\"format_version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 19, "\"format_version\": 9");
    atomic_write_text(path, text);
    CHECK_THROWS_AS(load_eps_checkpoint(path), Error);
}

TEST_CASE("unknown config keys are rejected by name") {
    CHECK_THROWS_WITH_AS(make_cfg("sample", {{"no_such_key", "1"}}),
                         doctest::Contains("no_such_key"), ConfigError);
    CHECK_THROWS_AS(default_config("bogus-command"), ConfigError);
}

TEST_CASE("config values parse with key-named diagnostics") {
    RunConfig cfg = make_cfg("sample", {{"n", "64"}, {"noise_correction", "false"}});
    CHECK(cfg.i64("n") == 64);
    CHECK(cfg.flag("noise_correction") == false);
    CHECK(cfg.int_list("step_set") == std::vector<int>{999, 750, 500});

    RunConfig bad = make_cfg("sample", {{"n", "sixty"}});
    CHECK_THROWS_WITH_AS(bad.i64("n"), doctest::Contains("n"), ConfigError);
}

TEST_CASE("config file merges under overrides") {
    TempDir dir;
    std::string path = dir.str("cfg.json");
    atomic_write_text(path, "{\"n\": 32, \"seed\": 7}\n");
    RunConfig cfg = RunConfig::resolve(default_config("sample"), path, {{"seed", "9"}});
    CHECK(cfg.i64("n") == 32);
    CHECK(cfg.u64("seed") == 9);

    atomic_write_text(path, "{\"whoops\": 1}\n");
    CHECK_THROWS_AS(RunConfig::resolve(default_config("sample"), path, {}), ConfigError);
}

TEST_CASE("gamma table parses from config text") {
    RunConfig cfg = make_cfg("distill", {{"gamma", "900:990,500:950,-1:200"}});
    SrlTable gamma = cfg.gamma_table("gamma");
    CHECK(gamma(999) == 990);
    CHECK(gamma(600) == 950);
    CHECK(gamma(10) == 200);
    RunConfig bad = make_cfg("distill", {{"gamma", "junk"}});
    CHECK_THROWS_AS(bad.gamma_table("gamma"), ConfigError);
}

TEST_CASE("train, sample and eval commands produce reproducible artifacts") {
    TempDir dir;
    RunConfig teacher_cfg = make_cfg(
        "train-teacher", {{"output_dir", dir.str()},
                          {"run_id", "t"},
                          {"steps", "60"},
                          {"batch", "32"},
                          {"n_train", "512"},
                          {"width", "16"},
                          {"depth", "2"},
                          {"cond_dim", "4"},
                          {"time_dim", "8"},
                          {"seed", "3"}});
    std::string tdir = cmd_train_teacher(teacher_cfg);
    CHECK(file_exists(tdir + "/teacher.ckpt"));
    CHECK(file_exists(tdir + "/teacher_loss.csv"));
    CHECK(file_exists(tdir + "/config_resolved.json"));

    // idempotent: a second invocation leaves the artifacts untouched
    std::string ckpt_before = read_text(tdir + "/teacher.ckpt");
    cmd_train_teacher(teacher_cfg);
    CHECK(read_text(tdir + "/teacher.ckpt") == ckpt_before);

    // same run_id with a different config is refused
    RunConfig conflict = make_cfg(
        "train-teacher",
        {{"output_dir", dir.str()}, {"run_id", "t"}, {"steps", "61"}, {"batch", "32"},
         {"n_train", "512"}, {"width", "16"}, {"depth", "2"}, {"cond_dim", "4"},
         {"time_dim", "8"}, {"seed", "3"}});
    CHECK_THROWS_AS(cmd_train_teacher(conflict), ConfigError);

    RunConfig sample_cfg =
        make_cfg("sample", {{"output_dir", dir.str()},
                            {"run_id", "s"},
                            {"ckpt", tdir + "/teacher.ckpt"},
                            {"n", "128"},
                            {"seed", "11"}});
    std::string sdir = cmd_sample(sample_cfg);
    std::string csv1 = read_text(sdir + "/samples.csv");

    RunConfig sample_cfg2 =
        make_cfg("sample", {{"output_dir", dir.str()},
                            {"run_id", "s2"},
                            {"ckpt", tdir + "/teacher.ckpt"},
                            {"n", "128"},
                            {"seed", "11"}});
    std::string sdir2 = cmd_sample(sample_cfg2);
    CHECK(read_text(sdir2 + "/samples.csv") == csv1);
    CHECK(file_exists(sdir + "/samples.svg"));

    RunConfig eval_cfg = make_cfg("eval", {{"output_dir", dir.str()},
                                           {"run_id", "e"},
                                           {"samples", sdir + "/samples.csv"},
                                           {"n_ref", "1000"},
                                           {"n_proj", "16"},
                                           {"seed", "5"}});
    std::string edir = cmd_eval(eval_cfg);
    std::string eval_text = read_text(edir + "/eval.csv");
    CHECK(eval_text.find("sliced_wasserstein") != std::string::npos);
    CHECK(eval_text.find("mode_recall") != std::string::npos);
    CHECK(eval_text.find("condition_fidelity") != std::string::npos);
}

TEST_CASE("an interrupted teacher run resumes to the same bytes") {
    TempDir dir;
    auto overrides = [&](const char* run_id) {
        return std::vector<std::pair<std::string, std::string>>{
            {"output_dir", dir.str()}, {"run_id", run_id}, {"steps", "90"},   {"batch", "16"},
            {"n_train", "256"},        {"width", "8"},     {"depth", "1"},    {"cond_dim", "4"},
            {"time_dim", "8"},         {"seed", "5"},      {"log_every", "10"}};
    };
    RunConfig cfg = make_cfg("train-teacher", overrides("whole"));
    std::string whole = cmd_train_teacher(cfg);

    // fabricate an interruption: run 30 of the 90 steps through the library,
    // store the partial state under the full-run snapshot, then resume
    RunConfig cfg2 = make_cfg("train-teacher", overrides("resumed"));
    std::string rdir = dir.str("resumed");
    atomic_write_text(rdir + "/config_resolved.json", cfg2.snapshot_json());
    {
        MixtureSpec spec = make_by_name("ring8");
        Dataset data = gen_dataset(spec, 256, 5);
        NoiseSchedule sched = build_schedule(1000, ScheduleKind::cosine, false);
        TeacherHyper hyper{30, 16, 1e-3, 0.1, 10};
        TeacherRun part = train_teacher(data, sched, EpsMlpConfig{2, 8, 8, 1, 8, 4}, hyper, 5);
        EpsCheckpoint ck;
        ck.model = part.model;
        ck.T = 1000;
        ck.zero_terminal_snr = false;
        ck.train_step = part.step;
        ck.seed = part.seed;
        ck.opt = part.opt;
        save_eps_checkpoint(rdir + "/teacher.ckpt", ck);
        std::string csv = "step,loss\r\n";
        for (const TrainLogRow& r : part.rows)
            csv += std::to_string(r.step) + "," + format_double(r.loss) + "\r\n";
        atomic_write_text(rdir + "/teacher_loss.csv", csv);
    }
    cmd_train_teacher(cfg2);

    CHECK(load_eps_checkpoint(rdir + "/teacher.ckpt").train_step == 90);
    CHECK(read_text(rdir + "/teacher_loss.csv") == read_text(whole + "/teacher_loss.csv"));
    // parameters identical to the uninterrupted run
    EpsCheckpoint a = load_eps_checkpoint(whole + "/teacher.ckpt");
    EpsCheckpoint b = load_eps_checkpoint(rdir + "/teacher.ckpt");
    for (std::size_t i = 0; i < a.model.w.size(); ++i)
        CHECK(a.model.w[i].data == b.model.w[i].data);
}

TEST_CASE("ablation table carries five variant rows and two teacher baselines") {
    TempDir dir;
    RunConfig teacher_cfg = make_cfg(
        "train-teacher", {{"output_dir", dir.str()}, {"run_id", "t"}, {"steps", "80"},
                          {"batch", "32"}, {"n_train", "512"}, {"width", "16"}, {"depth", "2"},
                          {"cond_dim", "4"}, {"time_dim", "8"}, {"seed", "3"}});
    std::string tdir = cmd_train_teacher(teacher_cfg);

    RunConfig ab = make_cfg("ablate", {{"output_dir", dir.str()},
                                       {"run_id", "ab"},
                                       {"teacher", tdir + "/teacher.ckpt"},
                                       {"steps", "30"},
                                       {"batch", "16"},
                                       {"n_train", "512"},
                                       {"n_eval", "256"},
                                       {"n_proj", "16"},
                                       {"seed", "4"}});
    std::string adir = cmd_ablate(ab);
    std::string text = read_text(adir + "/ablation.csv");

    std::size_t rows = 0, pos = 0;
    while ((pos = text.find("\r\n", pos)) != std::string::npos) {
        ++rows;
        pos += 2;
    }
    CHECK(rows == 8);  // header + 2 baselines + 5 variants
    for (const char* name : {"teacher_25step", "teacher_3step", "full", "no_noise_correction",
                             "no_discriminator", "no_backward_distillation", "no_srl"})
        CHECK(text.find(name) != std::string::npos);
}

TEST_CASE("cli maps bad usage and missing inputs to exit code 1") {
    TempDir dir;
    std::string out = dir.str("runs");
    const char* bad_cmd[] = {"flashdistill", "frobnicate"};
    CHECK(run_cli(2, bad_cmd) == 1);
    const char* bad_key[] = {"flashdistill", "sample", "--nope", "1"};
    CHECK(run_cli(4, bad_key) == 1);
    const char* missing_ckpt[] = {"flashdistill", "sample", "--ckpt", "/does/not/exist.ckpt",
                                  "--output_dir", out.c_str()};
    CHECK(run_cli(6, missing_ckpt) == 1);
    const char* help[] = {"flashdistill", "help"};
    CHECK(run_cli(2, help) == 0);
}
