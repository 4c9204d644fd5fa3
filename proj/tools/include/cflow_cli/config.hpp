// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "cflow/digits.hpp"
#include "cflow/errors.hpp"
#include "cflow/gmm.hpp"

namespace cflow::cli {

using Json = nlohmann::ordered_json;

/// Bad flags, unreadable or malformed config files, unknown keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Default documents. Every key that may appear in a config file is present
/// here, so the defaults double as the schema.
Json gmm_defaults();
Json digits_defaults();

/// Reads a JSON file and overlays it on `base`. Keys missing from `base` and
/// values of the wrong JSON type are rejected with the dotted key path.
Json overlay_file(const Json& base, const std::filesystem::path& path);
void overlay(Json& base, const Json& patch, const std::string& where = {});

gmm::ExperimentConfig gmm_config(const Json& doc);

struct DigitsSettings {
  digits::Config config;
  digits::LoadOptions load;
  std::filesystem::path data;
};
DigitsSettings digits_config(const Json& doc);

/// Writes `doc` as `config.echo` in dir.
void write_echo(const Json& doc, const std::filesystem::path& dir);

}  // namespace cflow::cli
