#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "flashdistill/adam.hpp"
#include "flashdistill/models.hpp"
#include "flashdistill/schedule.hpp"

namespace flashdistill {

inline constexpr int kCheckpointFormatVersion = 1;

// JSON checkpoints with full-precision decimal floats: human-inspectable,
// diffable, and byte-stable across save/load/save.
struct EpsCheckpoint {
    EpsModel model;
    int T = 1000;
    bool zero_terminal_snr = true;
    long train_step = 0;
    std::uint64_t seed = 0;
    std::optional<AdamState> opt;

    NoiseSchedule schedule() const {
        return build_schedule(T, ScheduleKind::cosine, zero_terminal_snr);
    }
};

std::string eps_checkpoint_json(const EpsCheckpoint& ckpt);
void save_eps_checkpoint(const std::string& path, const EpsCheckpoint& ckpt);
EpsCheckpoint load_eps_checkpoint(const std::string& path);

struct DiscCheckpoint {
    DiscModel model;
    long train_step = 0;
    std::uint64_t seed = 0;
    std::optional<AdamState> opt;
};

std::string disc_checkpoint_json(const DiscCheckpoint& ckpt);
void save_disc_checkpoint(const std::string& path, const DiscCheckpoint& ckpt);
DiscCheckpoint load_disc_checkpoint(const std::string& path);

}  // namespace flashdistill
