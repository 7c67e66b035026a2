#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "unmix/io.hpp"
#include "unmix/network.hpp"
#include "unmix/training.hpp"

namespace unmix {

/// Everything a training run needs besides the cube's own extents.
struct Profile {
    std::string name = "custom";
    std::int64_t p = 0;
    std::int64_t C = 0;
    std::int64_t h_n = 8;
    std::int64_t n_encoders = 2;
    std::int64_t R = 0;
    double beta = 0.0;
    double gamma = 0.0;
    std::int64_t epochs = 0;
    double lr0 = 0.0;
    double weight_decay = 0.0;
    double dropout_rate = 0.2;
    double leaky_slope = 0.01;
    std::uint64_t seed = 0;

    ModelConfig model_config(std::int64_t bands, std::int64_t h, std::int64_t w) const {
        ModelConfig cfg;
        cfg.B = bands;
        cfg.H = h;
        cfg.W = w;
        cfg.R = R;
        cfg.C = C;
        cfg.p = p;
        cfg.h_n = h_n;
        cfg.n_encoders = n_encoders;
        cfg.dropout_rate = dropout_rate;
        cfg.leaky_slope = leaky_slope;
        return cfg;
    }

    TrainConfig train_config() const {
        TrainConfig cfg;
        cfg.beta = beta;
        cfg.gamma = gamma;
        cfg.epochs = epochs;
        cfg.lr0 = lr0;
        cfg.weight_decay = weight_decay;
        cfg.seed = seed;
        return cfg;
    }
};

inline Profile samson_profile() {
    Profile pr;
    pr.name = "samson";
    pr.p = 5;
    pr.C = 24;
    pr.R = 3;
    pr.beta = 5e3;
    pr.gamma = 3e-2;
    pr.epochs = 200;
    pr.lr0 = 6e-3;
    pr.weight_decay = 4e-5;
    return pr;
}

inline Profile apex_profile() {
    Profile pr;
    pr.name = "apex";
    pr.p = 5;
    pr.C = 32;
    pr.R = 4;
    pr.beta = 5e3;
    pr.gamma = 5e-2;
    pr.epochs = 200;
    pr.lr0 = 9e-3;
    pr.weight_decay = 4e-5;
    return pr;
}

inline Profile wdc_profile() {
    Profile pr;
    pr.name = "wdc";
    pr.p = 10;
    pr.C = 24;
    pr.R = 6;
    pr.beta = 5e3;
    pr.gamma = 1e-4;
    pr.epochs = 150;
    pr.lr0 = 6e-3;
    pr.weight_decay = 3e-5;
    return pr;
}

inline nlohmann::json profile_to_json(const Profile& pr) {
    return nlohmann::json{{"name", pr.name},
                          {"p", pr.p},
                          {"C", pr.C},
                          {"h_n", pr.h_n},
                          {"n_encoders", pr.n_encoders},
                          {"R", pr.R},
                          {"beta", pr.beta},
                          {"gamma", pr.gamma},
                          {"epochs", pr.epochs},
                          {"lr0", pr.lr0},
                          {"weight_decay", pr.weight_decay},
                          {"dropout_rate", pr.dropout_rate},
                          {"leaky_slope", pr.leaky_slope},
                          {"seed", pr.seed}};
}

inline Profile profile_from_json(const nlohmann::json& j) {
    Profile pr;
    pr.name = j.value("name", std::string("custom"));
    pr.p = j.at("p");
    pr.C = j.at("C");
    pr.h_n = j.value("h_n", std::int64_t{8});
    pr.n_encoders = j.value("n_encoders", std::int64_t{2});
    pr.R = j.at("R");
    pr.beta = j.at("beta");
    pr.gamma = j.at("gamma");
    pr.epochs = j.at("epochs");
    pr.lr0 = j.at("lr0");
    pr.weight_decay = j.at("weight_decay");
    pr.dropout_rate = j.value("dropout_rate", 0.2);
    pr.leaky_slope = j.value("leaky_slope", 0.01);
    pr.seed = j.value("seed", std::uint64_t{0});
    return pr;
}

/// "samson" | "apex" | "wdc" | path to a custom profile JSON.
inline Profile load_profile(const std::string& name_or_path) {
    if (name_or_path == "samson") return samson_profile();
    if (name_or_path == "apex") return apex_profile();
    if (name_or_path == "wdc") return wdc_profile();
    if (!std::filesystem::exists(name_or_path))
        throw ConfigError("profile: \"" + name_or_path +
                          "\" is not a built-in profile (samson|apex|wdc) or an existing JSON file");
    try {
        return profile_from_json(read_json_file(name_or_path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("profile: " + name_or_path + ": " + e.what());
    }
}

}  // namespace unmix
