#include "flashdistill/checkpoint.hpp"

#include <json.hpp>

#include "flashdistill/error.hpp"
#include "flashdistill/io.hpp"

namespace flashdistill {

using nlohmann::json;

namespace {

json tensor_to_json(const Tensor& t) {
    json j;
    j["shape"] = t.shape;
    j["data"] = t.data;
    return j;
}

Tensor tensor_from_json(const json& j) {
    return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                  j.at("data").get<std::vector<double>>());
}

json adam_to_json(const AdamState& s) {
    json j;
    j["lr"] = s.hyper.lr;
    j["beta1"] = s.hyper.beta1;
    j["beta2"] = s.hyper.beta2;
    j["eps"] = s.hyper.eps;
    j["step_count"] = s.step_count;
    j["m"] = s.m;
    j["v"] = s.v;
    return j;
}

AdamState adam_from_json(const json& j) {
    AdamState s;
    s.hyper.lr = j.at("lr").get<double>();
    s.hyper.beta1 = j.at("beta1").get<double>();
    s.hyper.beta2 = j.at("beta2").get<double>();
    s.hyper.eps = j.at("eps").get<double>();
    s.step_count = j.at("step_count").get<long>();
    s.m = j.at("m").get<std::vector<std::vector<double>>>();
    s.v = j.at("v").get<std::vector<std::vector<double>>>();
    return s;
}

void check_version(const json& j, const std::string& path) {
    int v = j.at("format_version").get<int>();
    if (v != kCheckpointFormatVersion)
        throw Error("checkpoint " + path + ": format version " + std::to_string(v) +
                    ", this build reads " + std::to_string(kCheckpointFormatVersion));
}

}  // namespace

std::string eps_checkpoint_json(const EpsCheckpoint& ckpt) {
    json j;
    j["format_version"] = kCheckpointFormatVersion;
    j["kind"] = "eps_mlp";
    j["config"] = {{"sample_dim", ckpt.model.cfg.sample_dim},
                   {"n_classes", ckpt.model.cfg.n_classes},
                   {"width", ckpt.model.cfg.width},
                   {"depth", ckpt.model.cfg.depth},
                   {"time_dim", ckpt.model.cfg.time_dim},
                   {"cond_dim", ckpt.model.cfg.cond_dim}};
    j["schedule"] = {{"T", ckpt.T}, {"kind", "cosine"}, {"zero_terminal_snr", ckpt.zero_terminal_snr}};
    j["train_step"] = ckpt.train_step;
    j["seed"] = ckpt.seed;
    json params;
    std::vector<std::string> names = ckpt.model.param_names();
    std::vector<const Tensor*> tensors = ckpt.model.params();
    for (std::size_t i = 0; i < names.size(); ++i) params[names[i]] = tensor_to_json(*tensors[i]);
    j["params"] = std::move(params);
    if (ckpt.opt) j["adam"] = adam_to_json(*ckpt.opt);
    return j.dump(1) + "\n";
}

void save_eps_checkpoint(const std::string& path, const EpsCheckpoint& ckpt) {
    atomic_write_text(path, eps_checkpoint_json(ckpt));
}

EpsCheckpoint load_eps_checkpoint(const std::string& path) {
    json j = json::parse(read_text(path));
    check_version(j, path);
    if (j.at("kind").get<std::string>() != "eps_mlp")
        throw Error("checkpoint " + path + ": kind is not eps_mlp");
    EpsCheckpoint ckpt;
    const json& c = j.at("config");
    ckpt.model.cfg = EpsMlpConfig{c.at("sample_dim").get<int>(), c.at("n_classes").get<int>(),
                                  c.at("width").get<int>(),      c.at("depth").get<int>(),
                                  c.at("time_dim").get<int>(),   c.at("cond_dim").get<int>()};
    const json& s = j.at("schedule");
    ckpt.T = s.at("T").get<int>();
    ckpt.zero_terminal_snr = s.at("zero_terminal_snr").get<bool>();
    ckpt.train_step = j.at("train_step").get<long>();
    ckpt.seed = j.at("seed").get<std::uint64_t>();
    const json& params = j.at("params");
    for (int layer = 0; layer <= ckpt.model.cfg.depth; ++layer) {
        ckpt.model.w.push_back(tensor_from_json(params.at("w" + std::to_string(layer))));
        ckpt.model.b.push_back(tensor_from_json(params.at("b" + std::to_string(layer))));
    }
    ckpt.model.cond_table = tensor_from_json(params.at("cond_table"));
    if (j.contains("adam")) ckpt.opt = adam_from_json(j.at("adam"));
    return ckpt;
}

std::string disc_checkpoint_json(const DiscCheckpoint& ckpt) {
    json j;
    j["format_version"] = kCheckpointFormatVersion;
    j["kind"] = "disc_mlp";
    j["config"] = {{"sample_dim", ckpt.model.cfg.sample_dim},
                   {"width", ckpt.model.cfg.width},
                   {"depth", ckpt.model.cfg.depth},
                   {"time_dim", ckpt.model.cfg.time_dim}};
    j["train_step"] = ckpt.train_step;
    j["seed"] = ckpt.seed;
    json params;
    std::vector<std::string> names = ckpt.model.param_names();
    std::vector<const Tensor*> tensors = ckpt.model.params();
    for (std::size_t i = 0; i < names.size(); ++i) params[names[i]] = tensor_to_json(*tensors[i]);
    j["params"] = std::move(params);
    if (ckpt.opt) j["adam"] = adam_to_json(*ckpt.opt);
    return j.dump(1) + "\n";
}

void save_disc_checkpoint(const std::string& path, const DiscCheckpoint& ckpt) {
    atomic_write_text(path, disc_checkpoint_json(ckpt));
}

DiscCheckpoint load_disc_checkpoint(const std::string& path) {
    json j = json::parse(read_text(path));
    check_version(j, path);
    if (j.at("kind").get<std::string>() != "disc_mlp")
        throw Error("checkpoint " + path + ": kind is not disc_mlp");
    DiscCheckpoint ckpt;
    const json& c = j.at("config");
    ckpt.model.cfg = DiscMlpConfig{c.at("sample_dim").get<int>(), c.at("width").get<int>(),
                                   c.at("depth").get<int>(), c.at("time_dim").get<int>()};
    ckpt.train_step = j.at("train_step").get<long>();
    ckpt.seed = j.at("seed").get<std::uint64_t>();
    const json& params = j.at("params");
    for (int layer = 0; layer <= ckpt.model.cfg.depth; ++layer) {
        ckpt.model.w.push_back(tensor_from_json(params.at("w" + std::to_string(layer))));
        ckpt.model.b.push_back(tensor_from_json(params.at("b" + std::to_string(layer))));
    }
    if (j.contains("adam")) ckpt.opt = adam_from_json(j.at("adam"));
    return ckpt;
}

}  // namespace flashdistill
