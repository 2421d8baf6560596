#pragma once

// Electrical rule checks over a BOM table: fuse sizing against the 125% rule,
// >50 V AC segregation, and enclosure nameplate contents.
//
// Input dialect (UTF-8 CSV, `#` starts a comment line, fields may be
// double-quoted with "" as an escaped quote):
//
//   id,rating_a,class,branch,load_a[,load_basis]
//   FU-19480,1.6,GLASS,WATER PUMP,1.28,assumed
//   [enclosures]
//   name,max_voltage,lockable,nameplate
//   AC,120,yes,voltage_rating;current_rating;...
//   [devices]
//   id,voltage,kind,enclosure
//   [cables]
//   id,awg,conductors,description
//
// The fuse table comes first and needs no section marker. Every section's
// header line is optional. Malformed rows become PARSE findings and parsing
// carries on.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "acat/errors.hpp"

namespace acat::compliance {

enum class Severity { pass, warn, fail };

inline constexpr std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::pass: return "pass";
    case Severity::warn: return "warn";
    case Severity::fail: return "fail";
  }
  return "?";
}

inline constexpr std::string_view kRuleFuse = "FUSE-125";
inline constexpr std::string_view kRuleSegregation = "SEG-50V";
inline constexpr std::string_view kRuleMixed = "SEG-ACDC";
inline constexpr std::string_view kRuleNameplate = "NAMEPLATE";
inline constexpr std::string_view kRuleParse = "PARSE";

inline constexpr double kFuseFactor = 1.25;
inline constexpr double kSegregationVolts = 50.0;

struct Finding {
  std::string rule_id;
  Severity severity = Severity::pass;
  std::string subject;
  std::string message;

  friend bool operator==(const Finding&, const Finding&) = default;
};

struct FuseSpec {
  std::string id;
  double rating_a = 0.0;
  std::string fuse_class;
  std::string branch;
  std::optional<double> load_a;
  std::string load_basis;  // e.g. documented / assumed
  int line = 0;
};

struct EnclosureDecl {
  std::string name;
  double max_voltage = 0.0;
  bool lockable = false;
  std::set<std::string> nameplate_fields;
  int line = 0;
};

enum class SupplyKind { ac, dc };

struct DeviceDecl {
  std::string id;
  double voltage = 0.0;
  SupplyKind kind = SupplyKind::dc;
  std::string enclosure;
  int line = 0;
};

struct CableSpec {
  std::string id;
  std::string awg;
  std::optional<int> conductors;
  std::string description;
  int line = 0;
};

struct Bom {
  std::vector<FuseSpec> fuses;
  std::vector<EnclosureDecl> enclosures;
  std::vector<DeviceDecl> devices;
  std::vector<CableSpec> cables;
  std::vector<Finding> parse_findings;
};

inline constexpr std::array<std::string_view, 10> kNameplateFields = {
    "voltage_rating", "current_rating", "frequency",     "phase",          "power_rating",
    "manufacturer",   "serial_number",  "sccr",          "enclosure_type", "operating_temperature"};

// Union of the IEC 60127 5x20 mm series and the Class J size steps.
inline std::vector<double> default_fuse_ladder() {
  return {0.032, 0.04, 0.05, 0.063, 0.08, 0.1,  0.125, 0.16, 0.2,  0.25, 0.315, 0.4,  0.5,  0.63, 0.8,
          1.0,   1.25, 1.6,  2.0,   2.5,  3.0,  3.15,  4.0,  5.0,  6.0,  6.3,   8.0,  10.0, 12.0, 15.0,
          16.0,  17.5, 20.0, 25.0,  30.0, 35.0, 40.0,  45.0, 50.0, 60.0, 70.0,  80.0, 90.0, 100.0};
}

namespace detail {

// Ratings are decimal figures from a table; compare with a little slack so
// that 1.25 * (r / 1.25) still meets r.
inline bool at_least(double a, double b) { return a >= b * (1.0 - 1e-9); }
inline bool same(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b)); }

inline std::string amps(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str() + " A";
}

inline std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

// Splits one CSV record. Returns nullopt on an unterminated quote or stray
// characters after a closing quote.
inline std::optional<std::vector<std::string>> split_csv(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  std::size_t i = 0;
  for (;;) {
    cur.clear();
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i < line.size() && line[i] == '"') {
      ++i;
      bool closed = false;
      while (i < line.size()) {
        if (line[i] == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            cur += '"';
            i += 2;
            continue;
          }
          closed = true;
          ++i;
          break;
        }
        cur += line[i++];
      }
      if (!closed) return std::nullopt;
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      if (i < line.size() && line[i] != ',') return std::nullopt;
      fields.push_back(cur);
    } else {
      const auto end = line.find(',', i);
      const auto raw = line.substr(i, end == std::string_view::npos ? std::string_view::npos : end - i);
      if (raw.find('"') != std::string_view::npos) return std::nullopt;
      fields.emplace_back(trim(raw));
      i = end == std::string_view::npos ? line.size() : end;
    }
    if (i >= line.size()) break;
    ++i;  // the comma
    if (i == line.size()) {
      fields.emplace_back();
      break;
    }
  }
  return fields;
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  // Allow a trailing unit as printed in the drawings ("1.6 AMPS", "4A", "120V").
  for (std::string_view unit : {"amps", "amp", "a", "vac", "vdc", "v"}) {
    if (s.size() > unit.size() && lower(s.substr(s.size() - unit.size())) == unit) {
      s = trim(s.substr(0, s.size() - unit.size()));
      break;
    }
  }
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<bool> parse_bool(std::string_view s) {
  const auto v = lower(trim(s));
  if (v == "yes" || v == "true" || v == "1" || v == "y") return true;
  if (v == "no" || v == "false" || v == "0" || v == "n") return false;
  return std::nullopt;
}

enum class Section { fuses, enclosures, devices, cables, unknown };

inline Section section_from(std::string_view name) {
  const auto n = lower(trim(name));
  if (n == "fuses") return Section::fuses;
  if (n == "enclosures") return Section::enclosures;
  if (n == "devices") return Section::devices;
  if (n == "cables") return Section::cables;
  return Section::unknown;
}

inline bool is_header(Section s, const std::vector<std::string>& f) {
  if (f.empty()) return false;
  const auto first = lower(f[0]);
  switch (s) {
    case Section::fuses: return first == "id" && f.size() > 1 && lower(f[1]) == "rating_a";
    case Section::enclosures: return first == "name";
    case Section::devices:
    case Section::cables: return first == "id";
    case Section::unknown: return false;
  }
  return false;
}

}  // namespace detail

inline Bom parse_bom(std::istream& in) {
  using namespace detail;
  Bom bom;
  Section section = Section::fuses;
  bool header_allowed = true;
  std::string line;
  int line_no = 0;
  const auto bad = [&](const std::string& msg) {
    bom.parse_findings.push_back({std::string(kRuleParse), Severity::fail, "line " + std::to_string(line_no), msg});
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    if (text.front() == '[') {
      if (text.back() != ']') {
        bad("unterminated section marker");
        section = Section::unknown;
        continue;
      }
      section = section_from(text.substr(1, text.size() - 2));
      if (section == Section::unknown) bad("unknown section " + std::string(text));
      header_allowed = true;
      continue;
    }
    if (section == Section::unknown) continue;  // already reported at the marker
    auto fields = split_csv(text);
    if (!fields) {
      bad("unbalanced quotes");
      continue;
    }
    const auto& f = *fields;
    const bool header = header_allowed && is_header(section, f);
    header_allowed = false;
    if (header) {
      if (section == Section::fuses) {
        static constexpr std::array<std::string_view, 6> expected = {"id",      "rating_a", "class",
                                                                     "branch",  "load_a",   "load_basis"};
        for (std::size_t i = 0; i < f.size(); ++i)
          if (i >= expected.size() || lower(f[i]) != expected[i]) {
            bad("unexpected header column '" + f[i] + "'");
            break;
          }
      }
      continue;
    }

    switch (section) {
      case Section::fuses: {
        if (f.size() < 4 || f.size() > 6) {
          bad("fuse row needs 4 to 6 fields, got " + std::to_string(f.size()));
          break;
        }
        FuseSpec fuse;
        fuse.line = line_no;
        fuse.id = f[0];
        if (fuse.id.empty()) {
          bad("fuse id is empty");
          break;
        }
        const auto rating = parse_number(f[1]);
        if (!rating || *rating <= 0) {
          bad("fuse " + fuse.id + ": rating_a '" + f[1] + "' is not a positive number");
          break;
        }
        fuse.rating_a = *rating;
        fuse.fuse_class = f[2];
        fuse.branch = f[3];
        if (f.size() > 4 && !trim(f[4]).empty()) {
          const auto load = parse_number(f[4]);
          if (!load || *load <= 0) {
            bad("fuse " + fuse.id + ": load_a '" + f[4] + "' is not a positive number");
            break;
          }
          fuse.load_a = *load;
        }
        if (f.size() > 5) fuse.load_basis = f[5];
        bom.fuses.push_back(std::move(fuse));
        break;
      }
      case Section::enclosures: {
        if (f.size() < 3 || f.size() > 4) {
          bad("enclosure row needs 3 or 4 fields, got " + std::to_string(f.size()));
          break;
        }
        EnclosureDecl enc;
        enc.line = line_no;
        enc.name = f[0];
        const auto volts = parse_number(f[1]);
        const auto lockable = parse_bool(f[2]);
        if (enc.name.empty() || !volts || *volts < 0 || !lockable) {
          bad("enclosure row needs name, max_voltage >= 0 and lockable yes/no");
          break;
        }
        enc.max_voltage = *volts;
        enc.lockable = *lockable;
        if (f.size() == 4) {
          std::string_view rest = f[3];
          while (!rest.empty()) {
            const auto semi = rest.find(';');
            const auto item = trim(rest.substr(0, semi));
            if (!item.empty()) enc.nameplate_fields.insert(lower(item));
            if (semi == std::string_view::npos) break;
            rest.remove_prefix(semi + 1);
          }
        }
        bom.enclosures.push_back(std::move(enc));
        break;
      }
      case Section::devices: {
        if (f.size() != 4) {
          bad("device row needs 4 fields, got " + std::to_string(f.size()));
          break;
        }
        DeviceDecl dev;
        dev.line = line_no;
        dev.id = f[0];
        const auto volts = parse_number(f[1]);
        const auto kind = lower(f[2]);
        if (dev.id.empty() || !volts || *volts < 0 || (kind != "ac" && kind != "dc")) {
          bad("device row needs id, voltage >= 0 and kind ac|dc");
          break;
        }
        dev.voltage = *volts;
        dev.kind = kind == "ac" ? SupplyKind::ac : SupplyKind::dc;
        dev.enclosure = f[3];
        bom.devices.push_back(std::move(dev));
        break;
      }
      case Section::cables: {
        if (f.size() < 2 || f.size() > 4 || f[0].empty()) {
          bad("cable row needs id, awg[, conductors[, description]]");
          break;
        }
        CableSpec cable;
        cable.line = line_no;
        cable.id = f[0];
        cable.awg = f[1];
        if (f.size() > 2 && !f[2].empty()) {
          const auto n = parse_number(f[2]);
          if (!n || *n < 0 || *n != std::floor(*n) || *n > 1e6) {
            bad("cable " + cable.id + ": conductors '" + f[2] + "' is not a count");
            break;
          }
          cable.conductors = static_cast<int>(*n);
        }
        if (f.size() > 3) cable.description = f[3];
        bom.cables.push_back(std::move(cable));
        break;
      }
      case Section::unknown:
        break;
    }
  }
  return bom;
}

inline Bom parse_bom(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_bom(in);
}

inline Bom load_bom(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot read BOM file '" + path + "'");
  return parse_bom(in);
}

inline Finding check_fuse_sizing(const FuseSpec& fuse, const std::vector<double>& ladder = default_fuse_ladder()) {
  using detail::amps;
  if (!fuse.load_a || !(*fuse.load_a > 0)) throw InputError("fuse " + fuse.id + ": load must be known and > 0");
  if (!(fuse.rating_a > 0)) throw InputError("fuse " + fuse.id + ": rating must be > 0");
  const double load = *fuse.load_a;
  const double minimum = kFuseFactor * load;
  const double max_load = fuse.rating_a / kFuseFactor;
  std::optional<double> smallest;
  for (double size : ladder)
    if (detail::at_least(size, minimum) && (!smallest || size < *smallest)) smallest = size;

  Finding f{std::string(kRuleFuse), Severity::pass, fuse.id, ""};
  const std::string facts = "load " + amps(load) + ", minimum " + amps(minimum) + ", rating " + amps(fuse.rating_a) +
                            ", max admissible load " + amps(max_load);
  if (!detail::at_least(fuse.rating_a, minimum)) {
    f.severity = Severity::fail;
    f.message = "undersized: " + facts + (smallest ? "; smallest standard size " + amps(*smallest) : "");
  } else if (smallest && !detail::same(fuse.rating_a, *smallest)) {
    f.severity = Severity::warn;
    f.message = "not the smallest standard size: " + facts + "; use " + amps(*smallest);
  } else {
    f.message = facts;
  }
  if (!fuse.load_basis.empty()) f.message += " (load " + fuse.load_basis + ")";
  return f;
}

inline std::vector<std::string> missing_nameplate_fields(const std::set<std::string>& present) {
  std::vector<std::string> missing;
  for (auto field : kNameplateFields)
    if (!present.contains(std::string(field))) missing.emplace_back(field);
  return missing;
}

inline Finding check_nameplate(const EnclosureDecl& enc) {
  const auto missing = missing_nameplate_fields(enc.nameplate_fields);
  Finding f{std::string(kRuleNameplate), Severity::pass, enc.name, "all required nameplate fields present"};
  if (!missing.empty()) {
    f.severity = Severity::fail;
    f.message = "missing:";
    for (const auto& m : missing) f.message += " " + m;
  }
  return f;
}

inline std::vector<Finding> check_segregation(const std::vector<EnclosureDecl>& enclosures,
                                              const std::vector<DeviceDecl>& devices) {
  std::vector<Finding> out;
  const auto find = [&](const std::string& name) -> const EnclosureDecl* {
    for (const auto& e : enclosures)
      if (e.name == name) return &e;
    return nullptr;
  };
  for (const auto& d : devices) {
    if (d.kind != SupplyKind::ac || !(d.voltage > kSegregationVolts)) continue;
    const auto* enc = find(d.enclosure);
    Finding f{std::string(kRuleSegregation), Severity::pass, d.id, ""};
    std::ostringstream volts;
    volts << d.voltage << " V AC";
    if (!enc) {
      f.severity = Severity::fail;
      f.message = volts.str() + " device in undeclared enclosure '" + d.enclosure + "'";
    } else if (!enc->lockable) {
      f.severity = Severity::fail;
      f.message = volts.str() + " device in non-lockable enclosure " + enc->name;
    } else {
      f.message = volts.str() + " device in lockable enclosure " + enc->name;
    }
    out.push_back(std::move(f));
  }
  for (const auto& e : enclosures) {
    bool ac = false, dc = false;
    for (const auto& d : devices) {
      if (d.enclosure != e.name) continue;
      (d.kind == SupplyKind::ac ? ac : dc) = true;
    }
    if (!ac && !dc) continue;
    if (ac && dc)
      out.push_back({std::string(kRuleMixed), Severity::warn, e.name, "AC and DC devices share this enclosure"});
    else
      out.push_back({std::string(kRuleMixed), Severity::pass, e.name, ac ? "AC devices only" : "DC devices only"});
  }
  return out;
}

struct RuleReport {
  std::vector<Finding> findings;

  void sort() {
    std::stable_sort(findings.begin(), findings.end(), [](const Finding& a, const Finding& b) {
      return std::tie(a.subject, a.rule_id) < std::tie(b.subject, b.rule_id);
    });
  }

  std::size_t count(Severity s) const {
    return static_cast<std::size_t>(
        std::count_if(findings.begin(), findings.end(), [s](const Finding& f) { return f.severity == s; }));
  }
  bool has_fail() const { return count(Severity::fail) > 0; }

  std::string to_text() const {
    std::string out;
    for (const auto& f : findings) {
      std::string sev(to_string(f.severity));
      for (auto& c : sev) c = static_cast<char>(c - 'a' + 'A');
      out += sev + "  " + f.rule_id + "  " + f.subject + "  " + f.message + "\n";
    }
    out += std::to_string(count(Severity::pass)) + " pass, " + std::to_string(count(Severity::warn)) + " warn, " +
           std::to_string(count(Severity::fail)) + " fail\n";
    return out;
  }

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["v"] = 1;
    j["findings"] = nlohmann::ordered_json::array();
    for (const auto& f : findings)
      j["findings"].push_back(
          {{"rule_id", f.rule_id}, {"severity", to_string(f.severity)}, {"subject", f.subject}, {"message", f.message}});
    j["summary"] = {{"pass", count(Severity::pass)}, {"warn", count(Severity::warn)}, {"fail", count(Severity::fail)}};
    return j.dump(2) + "\n";
  }
};

// Fuses without a stated load cannot be sized; they get a warning carrying
// the largest load the fitted rating admits.
inline RuleReport check_bom(const Bom& bom, const std::vector<double>& ladder = default_fuse_ladder()) {
  RuleReport report;
  report.findings = bom.parse_findings;
  for (const auto& fuse : bom.fuses) {
    if (fuse.load_a) {
      report.findings.push_back(check_fuse_sizing(fuse, ladder));
    } else {
      report.findings.push_back({std::string(kRuleFuse), Severity::warn, fuse.id,
                                 "load unknown; max admissible load " + detail::amps(fuse.rating_a / kFuseFactor)});
    }
  }
  for (const auto& e : bom.enclosures) report.findings.push_back(check_nameplate(e));
  for (auto& f : check_segregation(bom.enclosures, bom.devices)) report.findings.push_back(std::move(f));
  report.sort();
  return report;
}

}  // namespace acat::compliance
