#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pstab/scenario.hpp"

using namespace pstab;
namespace fs = std::filesystem;

namespace {

std::string schema_error(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Schema);
    return e.what();
  }
  return "";
}

fs::path scratch_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("pstab-unit-" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("legacy sets print digit for digit") {
  CHECK(format_pss_row(legacy_set("A")) == "20,10,0.4863,0.1415,0.4863,0.1415");
  CHECK(format_pss_row(legacy_set("B")) == "40,10,0.2460,0.0352,0.2460,0.0352");
  CHECK(legacy_set("set-A") == legacy_set("A"));
  CHECK(legacy_set("Set B") == legacy_set("B"));
  CHECK_FALSE(is_legacy_set("C"));
  CHECK_THROWS_AS(legacy_set("C"), Error);
}

TEST_CASE("presets with legacy sets") {
  SUBCASE("0% IBR with set A has four identical PSSs") {
    auto sc = preset_scenario("two-area-0ibr");
    assign_pss(sc, "set-A");
    const auto slots = sc.model.pss_slots();
    REQUIRE(slots.size() == 4);
    for (const auto& s : slots) CHECK(*sc.model.pss_host(s).pss == legacy_set("A"));
  }
  SUBCASE("50% IBR with set B has PSSs at buses 2 and 4") {
    auto sc = preset_scenario("two-area-50ibr");
    assign_pss(sc, "set-B");
    CHECK(sc.model.pss_slots() == std::vector<std::string>{"PSS2", "PSS4"});
    CHECK(sc.model.pss_host("PSS2").bus == 2);
    CHECK(sc.model.pss_host("PSS4").bus == 4);
    for (const auto& s : sc.model.pss_slots()) CHECK(*sc.model.pss_host(s).pss == legacy_set("B"));
  }
  SUBCASE("presets carry the standard disturbance") {
    const auto sc = preset_scenario("two-area-0ibr");
    REQUIRE(sc.disturbances.size() == 1);
    CHECK(sc.disturbances[0].target == "L9");
    CHECK(sc.disturbances[0].magnitude == 0.01);
    CHECK(sc.disturbances[0].start_time == 1.0);
  }
  CHECK_THROWS_AS(preset_scenario("three-area"), Error);
}

TEST_CASE("schema errors name the offending key") {
  const std::string head = R"({"schema":"pstab.scenario/1","system":"two-area-0ibr",)";
  CHECK(schema_error(head + R"("options":{"bogus":1}})").find("$.options.bogus") != std::string::npos);
  CHECK(schema_error(head + R"("options":{"t_end":"x"}})").find("$.options.t_end") != std::string::npos);
  CHECK(schema_error(head + R"("experiment":"dance"})").find("$.experiment") != std::string::npos);
  CHECK(schema_error(head + R"("pss":{"PSS7":"A"}})").find("PSS7") != std::string::npos);
  CHECK(schema_error(head + R"("disturbances":[{"type":"load-step","bus":9,"zz":1}]})").find("$.disturbances[0].zz") !=
        std::string::npos);
  CHECK(schema_error(R"({"schema":"pstab.scenario/9","system":"two-area-0ibr"})").find("$.schema") !=
        std::string::npos);
  CHECK_THROWS_AS(parse_scenario("{not json"), Error);
}

TEST_CASE("explicit PSS parameters override a set") {
  const auto sc = parse_scenario(R"({"schema":"pstab.scenario/1","system":"two-area-50ibr",
    "pss":{"PSS2":"B","PSS4":{"K":33,"T_W":10,"T1":0.3,"T2":0.05,"T3":0.3,"T4":0.05}}})");
  CHECK(*sc.model.pss_host("PSS2").pss == legacy_set("B"));
  const auto& p = *sc.model.pss_host("PSS4").pss;
  CHECK(p.k == 33.0);
  CHECK(p.t2 == 0.05);
  CHECK(sc.pss_source.at("PSS4") == "explicit");
}

TEST_CASE("exported scenarios reload to the same model and report") {
  auto sc = preset_scenario("two-area-50ibr");
  assign_pss(sc, "A");
  sc.experiment = Experiment::Modes;
  const auto text = export_scenario(sc);
  const auto back = parse_scenario(text);
  CHECK(export_scenario(back) == text);
  CHECK(report_json(run_experiment(back)) == report_json(run_experiment(sc)));
}

TEST_CASE("mode tables label inter-area and local modes") {
  auto sc = preset_scenario("two-area-0ibr");
  assign_pss(sc, "off");
  sc.experiment = Experiment::Modes;
  const auto rep = run_experiment(sc);
  REQUIRE(rep.has_modes);
  bool inter = false, local = false;
  for (const auto& m : rep.modes) {
    inter |= m.cls == "inter-area";
    local |= m.cls == "local";
  }
  CHECK(inter);
  CHECK(local);
  CHECK(rep.modal_stable);
  CHECK(rep.exit_code() == 0);
}

TEST_CASE("artifacts are written with a manifest") {
  auto sc = preset_scenario("two-area-0ibr");
  assign_pss(sc, "B");
  sc.experiment = Experiment::PowerFlow;
  const auto dir = scratch_dir("artifacts");
  const auto rep = write_artifacts(run_experiment(sc), sc, dir.string());
  for (const char* f : {"scenario.json", "powerflow.csv", "pss_before.csv", "report.json", "manifest.json"})
    CHECK_MESSAGE(fs::exists(dir / f), f);
  CHECK_FALSE(rep.artifacts.empty());
  std::ifstream pss(dir / "pss_before.csv");
  std::string header, row;
  std::getline(pss, header);
  std::getline(pss, row);
  CHECK(header == "slot,K_PSS,T_W,T1,T2,T3,T4");
  CHECK(row == "PSS1,40,10,0.2460,0.0352,0.2460,0.0352");
}

TEST_CASE("state-space scenarios support tuning only") {
  const auto dir = scratch_dir("statespace");
  {
    std::ofstream os(dir / "plant.csv");
    const double wb = 2.0 * kPi * 60.0;
    StateSpaceModel ss;
    ss.a = Mat{{0.0, wb, 0.0}, {-0.1, -0.05, -0.1}, {0.0, 0.0, -2.0}};
    ss.b = Mat{{0.0}, {0.0}, {2.0}};
    ss.c = Mat{{0.0, 1.0, 0.0}};
    ss.d = Mat::Zero(1, 1);
    ss.state_labels = {"G4.delta", "G4.dw", "G4.eq1"};
    ss.input_labels = {"G4.Vref"};
    ss.output_labels = {"G4.dw"};
    write_state_space(os, ss);
  }
  auto scenario_text = [&](const std::string& experiment) {
    return R"({"schema":"pstab.scenario/1","system":{"state_space":"plant.csv","host":"G4"},"experiment":")" +
           experiment + R"("})";
  };
  {
    std::ofstream(dir / "tune.json") << scenario_text("tune-residues");
    std::ofstream(dir / "sim.json") << scenario_text("simulate");
  }
  const auto sc = load_scenario((dir / "tune.json").string());
  REQUIRE(sc.state_space);
  const auto rep = run_experiment(sc);
  REQUIRE(rep.tuning.size() == 1);
  CHECK(rep.tuning[0].stabilizable);
  CHECK_THROWS_AS(load_scenario((dir / "sim.json").string()), Error);
}
