#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "bowsense/lstm.hpp"
#include "bowsense/mlp.hpp"

namespace bowsense::nn {

/// Dispatches to the LSTM or MLP finite-difference check on a small seeded
/// instance.
double gradient_check(ModelKind kind, std::uint64_t seed);

// Model files: "BOWSENSE" magic, u32 version, u32 kind, then dims, training
// config, standardizer and weight tensors in declaration order. All integers
// are u32/u64 and all reals f64, little-endian.
inline constexpr std::uint32_t kModelFormatVersion = 1;

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string serialize(const LstmModel& model);
std::string serialize(const MlpModel& model);
LstmModel deserialize_lstm(const std::string& bytes, std::optional<std::size_t> expected_input_dim = {});
MlpModel deserialize_mlp(const std::string& bytes, std::optional<std::size_t> expected_input_dim = {});

/// Writes to a sibling temporary file and renames it into place.
void save_model(const std::filesystem::path& path, const LstmModel& model);
void save_model(const std::filesystem::path& path, const MlpModel& model);
LstmModel load_lstm(const std::filesystem::path& path, std::optional<std::size_t> expected_input_dim = {});
MlpModel load_mlp(const std::filesystem::path& path, std::optional<std::size_t> expected_input_dim = {});

}  // namespace bowsense::nn
