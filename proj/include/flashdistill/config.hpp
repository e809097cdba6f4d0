#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "flashdistill/distill.hpp"

namespace flashdistill {

// Flat key/value settings for one command: defaults, then the JSON config
// file, then command-line overrides. Keys outside the command's default
// table are rejected by name.
struct RunConfig {
    std::map<std::string, std::string> values;

    static RunConfig resolve(const std::map<std::string, std::string>& defaults,
                             const std::string& config_path,
                             const std::vector<std::pair<std::string, std::string>>& overrides);

    bool has(const std::string& key) const;
    const std::string& str(const std::string& key) const;
    long i64(const std::string& key) const;
    std::uint64_t u64(const std::string& key) const;
    double dbl(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<int> int_list(const std::string& key) const;  // "999,750,500"
    SrlTable gamma_table(const std::string& key) const;       // "900:990,500:950,-1:200"

    std::string snapshot_json() const;
};

}  // namespace flashdistill
