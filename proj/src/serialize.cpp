#include "triage/serialize.hpp"

#include <istream>
#include <ostream>
#include <string>

#include <fmt/format.h>

#include "triage/error.hpp"

namespace triage {

namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

Json range_to_json(const Range& r) { return Json::array({r.lo, r.hi}); }

Range range_from_json(const Json& j, const char* name) {
  if (!j.is_array() || j.size() != 2) {
    throw ConfigError(fmt::format("policy field {} must be a [lo, hi] pair", name));
  }
  return Range{j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

Json to_json(const TransformSpec& spec) {
  return std::visit(
      Overloaded{
          [](const Pan& p) { return Json{{"kind", "pan"}, {"dx", p.dx}, {"dy", p.dy}}; },
          [](const Rotate2d& r) { return Json{{"kind", "rotate2d"}, {"degrees", r.degrees}}; },
          [](const Affine& a) { return Json{{"kind", "affine"}, {"matrix", a.matrix}}; },
          [](const Perspective& p) { return Json{{"kind", "perspective"}, {"matrix", p.matrix}}; },
      },
      spec.params());
}

TransformSpec transform_spec_from_json(const Json& j) {
  try {
    const auto kind_name = j.at("kind").get<std::string>();
    const auto kind = parse_transform_kind(kind_name);
    if (!kind) throw ValidationError(fmt::format("unknown transform kind '{}'", kind_name));
    switch (*kind) {
      case TransformKind::pan:
        return TransformSpec(Pan{j.at("dx").get<double>(), j.at("dy").get<double>()});
      case TransformKind::rotate2d:
        return TransformSpec(Rotate2d{j.at("degrees").get<double>()});
      case TransformKind::affine:
        return TransformSpec(Affine{j.at("matrix").get<std::array<double, 6>>()});
      case TransformKind::perspective:
        return TransformSpec(Perspective{j.at("matrix").get<Matrix3>()});
    }
  } catch (const Json::exception& e) {
    throw ValidationError(fmt::format("bad transform spec: {}", e.what()));
  }
  throw ValidationError("bad transform spec");
}

Json to_json(const TransformPolicy& policy) {
  Json kinds = Json::array();
  for (TransformKind k : policy.enabled) kinds.push_back(to_string(k));
  return Json{
      {"seed", policy.seed},
      {"transforms", kinds},
      {"pan_fraction", range_to_json(policy.pan_fraction)},
      {"rotate_degrees", range_to_json(policy.rotate_degrees)},
      {"affine_linear", range_to_json(policy.affine_linear)},
      {"affine_translation_fraction", range_to_json(policy.affine_translation_fraction)},
      {"perspective_fraction", range_to_json(policy.perspective_fraction)},
  };
}

TransformPolicy transform_policy_from_json(const Json& j) {
  TransformPolicy policy;
  if (!j.is_object()) throw ConfigError("transform policy must be a JSON object");
  try {
    if (j.contains("seed")) policy.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("transforms")) {
      policy.enabled.clear();
      for (const auto& name : j["transforms"]) {
        const auto kind = parse_transform_kind(name.get<std::string>());
        if (!kind) {
          throw ConfigError(fmt::format("unknown transform kind '{}'", name.get<std::string>()));
        }
        policy.enabled.push_back(*kind);
      }
    }
    if (j.contains("pan_fraction")) policy.pan_fraction = range_from_json(j["pan_fraction"], "pan_fraction");
    if (j.contains("rotate_degrees")) policy.rotate_degrees = range_from_json(j["rotate_degrees"], "rotate_degrees");
    if (j.contains("affine_linear")) policy.affine_linear = range_from_json(j["affine_linear"], "affine_linear");
    if (j.contains("affine_translation_fraction")) {
      policy.affine_translation_fraction =
          range_from_json(j["affine_translation_fraction"], "affine_translation_fraction");
    }
    if (j.contains("perspective_fraction")) {
      policy.perspective_fraction = range_from_json(j["perspective_fraction"], "perspective_fraction");
    }
  } catch (const Json::exception& e) {
    throw ConfigError(fmt::format("bad transform policy: {}", e.what()));
  }
  return policy;
}

Json to_json(const ErrorEntry& entry) {
  return Json{{"sample_id", entry.sample_id},
              {"label", entry.label},
              {"transformed_label", entry.transformed_label},
              {"query_id", entry.query_id},
              {"transform", to_json(entry.transform)}};
}

ErrorEntry error_entry_from_json(const Json& j) {
  try {
    return ErrorEntry{j.at("sample_id").get<std::string>(),
                      transform_spec_from_json(j.at("transform")),
                      j.at("transformed_label").get<ClassIndex>(), j.at("label").get<ClassIndex>(),
                      j.at("query_id").get<std::string>()};
  } catch (const Json::exception& e) {
    throw ParseError(fmt::format("bad error record: {}", e.what()));
  }
}

Json to_json(const FlagEntry& entry) {
  return Json{{"sample_id", entry.sample_id},
              {"label", entry.label},
              {"predicted", entry.predicted},
              {"shannon", entry.shannon.value}};
}

FlagEntry flag_entry_from_json(const Json& j) {
  try {
    return FlagEntry{j.at("sample_id").get<std::string>(), j.at("label").get<ClassIndex>(),
                     j.at("predicted").get<ClassIndex>(), ShannonIndex{j.at("shannon").get<double>()}};
  } catch (const Json::exception& e) {
    throw ParseError(fmt::format("bad flag record: {}", e.what()));
  }
}

void write_jsonl(std::ostream& out, std::span<const ErrorEntry> entries) {
  for (const auto& e : entries) out << to_json(e).dump() << '\n';
}

void write_jsonl(std::ostream& out, std::span<const FlagEntry> entries) {
  for (const auto& e : entries) out << to_json(e).dump() << '\n';
}

namespace {

template <class T, class Parse>
std::vector<T> read_lines(std::istream& in, Parse parse) {
  std::vector<T> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError(fmt::format("line {}: invalid JSON", line_no));
    out.push_back(parse(j));
  }
  return out;
}

}  // namespace

std::vector<ErrorEntry> read_error_jsonl(std::istream& in) {
  return read_lines<ErrorEntry>(in, error_entry_from_json);
}

std::vector<FlagEntry> read_flag_jsonl(std::istream& in) {
  return read_lines<FlagEntry>(in, flag_entry_from_json);
}

void write_error_csv(std::ostream& out, std::span<const ErrorEntry> entries) {
  out << "sample_id,label,transformed_label,transform\n";
  for (const auto& e : entries) {
    out << fmt::format("{},{},{},{}\n", e.sample_id, e.label, e.transformed_label,
                       to_string(e.transform.kind()));
  }
}

void write_flag_csv(std::ostream& out, std::span<const FlagEntry> entries) {
  out << "sample_id,label,predicted,shannon\n";
  for (const auto& e : entries) {
    out << fmt::format("{},{},{},{}\n", e.sample_id, e.label, e.predicted, e.shannon.value);
  }
}

}  // namespace triage
