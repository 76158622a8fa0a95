#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "triage/selection.hpp"
#include "triage/transforms.hpp"

namespace triage {

using Json = nlohmann::json;

Json to_json(const TransformSpec& spec);
TransformSpec transform_spec_from_json(const Json& j);

Json to_json(const TransformPolicy& policy);
/// Missing keys keep their defaults.
TransformPolicy transform_policy_from_json(const Json& j);

Json to_json(const ErrorEntry& entry);
ErrorEntry error_entry_from_json(const Json& j);

Json to_json(const FlagEntry& entry);
FlagEntry flag_entry_from_json(const Json& j);

/// One compact JSON object per line.
void write_jsonl(std::ostream& out, std::span<const ErrorEntry> entries);
void write_jsonl(std::ostream& out, std::span<const FlagEntry> entries);
std::vector<ErrorEntry> read_error_jsonl(std::istream& in);
std::vector<FlagEntry> read_flag_jsonl(std::istream& in);

void write_error_csv(std::ostream& out, std::span<const ErrorEntry> entries);
void write_flag_csv(std::ostream& out, std::span<const FlagEntry> entries);

}  // namespace triage
