#include <catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "acat/compliance.hpp"
#include "acat/random.hpp"

using namespace acat;
using namespace acat::compliance;

namespace {

const std::string kFixture = std::string(ACAT_SOURCE_DIR) + "/data/electrical_bom.csv";

std::string fixture_text() {
  std::ifstream in(kFixture);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

FuseSpec fuse(double rating, std::optional<double> load) {
  FuseSpec f;
  f.id = "FU-T";
  f.rating_a = rating;
  f.load_a = load;
  return f;
}

std::set<std::string> all_fields() {
  std::set<std::string> s;
  for (auto f : kNameplateFields) s.emplace(f);
  return s;
}

}  // namespace

TEST_CASE("fuse rows parse", "[compliance]") {
  const auto bom = parse_bom("FU-19480,1.6,GLASS,WATER PUMP\n");
  REQUIRE(bom.fuses.size() == 1);
  CHECK(bom.fuses[0].id == "FU-19480");
  CHECK(bom.fuses[0].rating_a == 1.6);
  CHECK(bom.fuses[0].fuse_class == "GLASS");
  CHECK(bom.fuses[0].branch == "WATER PUMP");
  CHECK_FALSE(bom.fuses[0].load_a);
  CHECK(bom.parse_findings.empty());

  const auto empty = parse_bom("");
  CHECK(empty.fuses.empty());
  CHECK(empty.enclosures.empty());
  CHECK(empty.devices.empty());
  CHECK(check_bom(empty).findings.empty());

  const auto with_header = parse_bom("id,rating_a,class,branch,load_a\nFU-1,4,CLASS J,\"MAIN, 120V\",3\n");
  REQUIRE(with_header.fuses.size() == 1);
  CHECK(with_header.fuses[0].branch == "MAIN, 120V");
  CHECK(with_header.fuses[0].load_a == 3.0);

  const auto bad = parse_bom("FU-1,abc,GLASS,X\nFU-2,1\n\"open,1,2,3\n");
  CHECK(bad.fuses.empty());
  CHECK(bad.parse_findings.size() == 3);
  CHECK(check_bom(bad).has_fail());
}

TEST_CASE("fuse sizing against the 125% rule", "[compliance]") {
  const auto main = check_fuse_sizing(fuse(4.0, 3.0));
  CHECK(main.severity == Severity::pass);
  CHECK(main.message.find("minimum 3.75 A") != std::string::npos);

  CHECK(check_fuse_sizing(fuse(1.25, 1.0)).severity == Severity::pass);  // exactly at the boundary
  CHECK(check_fuse_sizing(fuse(1.6, 1.6 / 1.25)).severity == Severity::pass);
  CHECK(check_fuse_sizing(fuse(3.5, 3.0)).severity == Severity::fail);  // 3.5 < 3.75
  CHECK(check_fuse_sizing(fuse(4.0, 3.3)).severity == Severity::fail);
  CHECK(check_fuse_sizing(fuse(10.0, 3.0)).severity == Severity::warn);  // oversized

  const auto pump = check_fuse_sizing(fuse(1.6, 1.0));
  CHECK(pump.message.find("max admissible load 1.28 A") != std::string::npos);

  CHECK_THROWS_AS(check_fuse_sizing(fuse(1.6, std::nullopt)), InputError);
  CHECK_THROWS_AS(check_fuse_sizing(fuse(1.6, 0.0)), InputError);

  // Property: pass or warn iff rating >= 1.25 load.
  auto rng = sim::random_stream(4, "fuses");
  for (int i = 0; i < 2000; ++i) {
    const double load = 0.01 + rng.uniform01() * 50.0;
    const double rating = 0.01 + rng.uniform01() * 80.0;
    const auto f = check_fuse_sizing(fuse(rating, load));
    REQUIRE((f.severity == Severity::fail) == (rating < 1.25 * load * (1 - 1e-9)));
  }

  const auto unknown = check_bom(parse_bom("FU-19480,1.6,GLASS,WATER PUMP\n"));
  REQUIRE(unknown.findings.size() == 1);
  CHECK(unknown.findings[0].severity == Severity::warn);
  CHECK(unknown.findings[0].message.find("1.28 A") != std::string::npos);
}

TEST_CASE("segregation of AC above 50 V", "[compliance]") {
  EnclosureDecl ac{"AC", 120, true, all_fields(), 0};
  EnclosureDecl main{"MAIN", 24, false, all_fields(), 0};
  const DeviceDecl disconnect{"DSC-1", 120, SupplyKind::ac, "AC", 0};

  auto f = check_segregation({ac, main}, {disconnect});
  REQUIRE(f.size() == 2);
  CHECK(f[0].rule_id == kRuleSegregation);
  CHECK(f[0].severity == Severity::pass);
  CHECK(check_segregation({ac, main}, {}).empty());

  const DeviceDecl misplaced{"PWS-1", 120, SupplyKind::ac, "MAIN", 0};
  f = check_segregation({ac, main}, {misplaced});
  CHECK(f[0].severity == Severity::fail);
  const DeviceDecl orphan{"PWS-2", 120, SupplyKind::ac, "NOWHERE", 0};
  CHECK(check_segregation({ac}, {orphan})[0].severity == Severity::fail);
  const DeviceDecl low{"LV-1", 48, SupplyKind::ac, "MAIN", 0};
  for (const auto& x : check_segregation({ac, main}, {low})) CHECK(x.severity == Severity::pass);

  // The shipped fixture with a 120 V device moved into the 24 V main enclosure.
  auto text = fixture_text();
  text += "\n[devices]\nDSC-MOVED,120,AC,MAIN ENCLOSURE\n";
  const auto report = check_bom(parse_bom(text));
  bool failed = false;
  for (const auto& x : report.findings)
    failed |= x.subject == "DSC-MOVED" && x.rule_id == kRuleSegregation && x.severity == Severity::fail;
  CHECK(failed);
}

TEST_CASE("enclosure nameplate", "[compliance]") {
  CHECK(check_nameplate({"AC", 120, true, all_fields(), 0}).severity == Severity::pass);
  const auto none = check_nameplate({"AC", 120, true, {}, 0});
  CHECK(none.severity == Severity::fail);
  for (auto field : kNameplateFields) CHECK(none.message.find(field) != std::string::npos);
  CHECK(missing_nameplate_fields({}).size() == 10);

  auto rng = sim::random_stream(6, "nameplate");
  for (int i = 0; i < 500; ++i) {
    std::set<std::string> present;
    std::vector<std::string> complement;
    for (auto field : kNameplateFields) {
      if (rng.uniform01() < 0.5)
        present.emplace(field);
      else
        complement.emplace_back(field);
    }
    if (rng.uniform01() < 0.2) present.emplace("colour");  // extras are ignored
    REQUIRE(missing_nameplate_fields(present) == complement);
  }
}

TEST_CASE("appendix fixture has no failures and reports deterministically", "[compliance]") {
  const auto bom = load_bom(kFixture);
  CHECK(bom.parse_findings.empty());
  CHECK(bom.fuses.size() == 10);
  CHECK(bom.enclosures.size() == 3);
  const auto report = check_bom(bom);
  INFO(report.to_text());
  CHECK(report.count(Severity::fail) == 0);
  const auto again = check_bom(load_bom(kFixture));
  CHECK(report.to_text() == again.to_text());
  CHECK(report.to_json() == again.to_json());
  const auto j = nlohmann::json::parse(report.to_json());
  CHECK(j["v"] == 1);
  CHECK(j["summary"]["fail"] == 0);
  CHECK_THROWS_AS(load_bom("/no/such/bom.csv"), IOError);
}

TEST_CASE("parser survives mutated input", "[compliance]") {
  const auto base = fixture_text();
  std::vector<std::string> lines;
  {
    std::istringstream in(base);
    std::string l;
    while (std::getline(in, l)) lines.push_back(l);
  }
  auto rng = sim::random_stream(10, "bom-fuzz");
  const std::string alphabet = ",\"[]#\n\r\t ;.-+eE0123456789AJyesno";
  std::string doc;
  for (int row = 0; row < 10000; ++row) {
    std::string l = lines[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(lines.size()) - 1))];
    const auto edits = rng.uniform_int(1, 6);
    for (int e = 0; e < edits; ++e) {
      const auto op = rng.uniform_int(0, 4);
      const auto pos = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(l.size())));
      switch (op) {
        case 0: l.insert(pos, 1, alphabet[static_cast<std::size_t>(rng.uniform_int(0, alphabet.size() - 1))]); break;
        case 1:
          if (pos < l.size()) l.erase(pos, 1);
          break;
        case 2: l.insert(pos, 1, static_cast<char>(rng.uniform_int(0, 255))); break;
        case 3:
          if (pos < l.size()) l.resize(pos);
          break;
        default: l += "," + l; break;
      }
    }
    doc += l;
    doc += '\n';
    // each mutated row on its own, and the growing document every so often
    REQUIRE_NOTHROW(check_bom(parse_bom(l)));
    if (row % 1000 == 999) REQUIRE_NOTHROW(check_bom(parse_bom(doc)));
  }
}
