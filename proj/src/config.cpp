#include "flashdistill/config.hpp"

#include <json.hpp>

#include "flashdistill/error.hpp"
#include "flashdistill/io.hpp"

namespace flashdistill {

using nlohmann::json;

RunConfig RunConfig::resolve(const std::map<std::string, std::string>& defaults,
                             const std::string& config_path,
                             const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig cfg;
    cfg.values = defaults;

    auto put = [&](const std::string& key, const std::string& value, const std::string& origin) {
        if (!defaults.count(key))
            throw ConfigError("unknown config key '" + key + "' (" + origin + ")");
        cfg.values[key] = value;
    };

    if (!config_path.empty()) {
        json j;
        try {
            j = json::parse(read_text(config_path));
        } catch (const json::parse_error& e) {
            throw ConfigError("config file " + config_path + ": " + e.what());
        }
        if (!j.is_object()) throw ConfigError("config file " + config_path + ": not a flat object");
        for (auto& [key, value] : j.items()) {
            std::string s;
            if (value.is_string()) s = value.get<std::string>();
            else if (value.is_boolean()) s = value.get<bool>() ? "true" : "false";
            else if (value.is_number_integer()) s = std::to_string(value.get<long long>());
            else if (value.is_number_unsigned()) s = std::to_string(value.get<unsigned long long>());
            else if (value.is_number_float()) s = format_double(value.get<double>());
            else throw ConfigError("config key '" + key + "': unsupported value type");
            put(key, s, config_path);
        }
    }
    for (const auto& [key, value] : overrides) put(key, value, "command line");
    return cfg;
}

bool RunConfig::has(const std::string& key) const {
    auto it = values.find(key);
    return it != values.end() && !it->second.empty();
}

const std::string& RunConfig::str(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
}

long RunConfig::i64(const std::string& key) const {
    try {
        std::size_t used = 0;
        long v = std::stol(str(key), &used);
        if (used != str(key).size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + str(key) + "' is not an integer");
    }
}

std::uint64_t RunConfig::u64(const std::string& key) const {
    try {
        std::size_t used = 0;
        unsigned long long v = std::stoull(str(key), &used);
        if (used != str(key).size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + str(key) + "' is not an integer");
    }
}

double RunConfig::dbl(const std::string& key) const {
    try {
        std::size_t used = 0;
        double v = std::stod(str(key), &used);
        if (used != str(key).size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + str(key) + "' is not a number");
    }
}

bool RunConfig::flag(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<int> RunConfig::int_list(const std::string& key) const {
    const std::string& v = str(key);
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos < v.size()) {
        std::size_t comma = v.find(',', pos);
        std::string cell = v.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            out.push_back(std::stoi(cell));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': '" + cell + "' is not an integer");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

SrlTable RunConfig::gamma_table(const std::string& key) const {
    const std::string& v = str(key);
    SrlTable table;
    std::size_t pos = 0;
    while (pos < v.size()) {
        std::size_t comma = v.find(',', pos);
        std::string cell = v.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        std::size_t colon = cell.find(':');
        if (colon == std::string::npos)
            throw ConfigError("config key '" + key + "': piece '" + cell + "' is not t_above:out");
        try {
            table.pieces.push_back(
                {std::stoi(cell.substr(0, colon)), std::stoi(cell.substr(colon + 1))});
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': piece '" + cell + "' is not t_above:out");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (table.pieces.empty()) throw ConfigError("config key '" + key + "': empty table");
    return table;
}

std::string RunConfig::snapshot_json() const {
    json j = json::object();
    for (const auto& [key, value] : values) j[key] = value;
    return j.dump(1) + "\n";
}

}  // namespace flashdistill
