#include <doctest.h>

#include "molext/cli.hpp"
#include "molext/csv.hpp"
#include "molext/lineshape.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace molext;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "molext_cli_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kRun = R"([emitter]
nu21 = 2
gamma = 35
gamma0 = 8
alpha = 0.25

[coupling]
c_amp = 1.0
psi_deg = 90
i_e = 250000

[grid]
points = 200

[acquisition]
dwell = 0.01
averages = 20
laser_rms = 0.003
seed = 11

[fluorescence]
peak = 4000
)";

} // namespace

TEST_CASE("simulate, fit and replay") {
  const fs::path dir = scratch("pipeline");
  write(dir / "run.ini", kRun);
  Run r = run({"simulate", "--config", (dir / "run.ini").string(), "--out", (dir / "sim").string()});
  REQUIRE(r.code == cli::kExitOk);
  for (const char* f : {"transmission.csv", "transmission_model.csv", "fluorescence.csv", "manifest.json"})
    CHECK(fs::exists(dir / "sim" / f));

  const Spectrum model = csv::read_spectrum_file(dir / "sim" / "transmission_model.csv");
  CHECK(model.size() == 200);
  CHECK(*std::min_element(model.values.begin(), model.values.end()) < 2.5e5 * 0.95);

  r = run({"fit", (dir / "sim" / "transmission.csv").string(), "--fluorescence",
           (dir / "sim" / "fluorescence.csv").string(), "--gamma0", "8", "--out", (dir / "fit").string()});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(r.out.find("c_amp") != std::string::npos);
  const auto report = nlohmann::json::parse(slurp(dir / "fit" / "fit.json"));
  double c = 0, psi = 0;
  for (const auto& p : report["transmission"]["params"]) {
    if (p["name"] == "c_amp") c = p["value"];
    if (p["name"] == "psi") psi = p["value"];
  }
  CHECK(c == doctest::Approx(1.0).epsilon(0.1));
  CHECK(psi == doctest::Approx(kPi / 2).epsilon(0.1));
  CHECK(fs::exists(dir / "fit" / "residuals.csv"));

  r = run({"replay", (dir / "sim" / "manifest.json").string(), "--out", (dir / "again").string()});
  REQUIRE(r.code == cli::kExitOk);
  for (const char* f : {"transmission.csv", "transmission_model.csv", "fluorescence.csv", "fluorescence_model.csv"})
    CHECK(slurp(dir / "sim" / f) == slurp(dir / "again" / f));
}

TEST_CASE("zero coupling simulates a flat spectrum") {
  const fs::path dir = scratch("flat");
  std::string text = kRun;
  text.replace(text.find("c_amp = 1.0"), 11, "c_amp = 0.0");
  write(dir / "run.ini", text);
  REQUIRE(run({"simulate", "--config", (dir / "run.ini").string(), "--out", dir.string()}).code == 0);
  const Spectrum s = csv::read_spectrum_file(dir / "transmission_model.csv");
  for (double v : s.values) CHECK(v == 2.5e5);

  // and fitting it reports no signal
  const Run r = run({"fit", (dir / "transmission_model.csv").string(), "--gamma", "35", "--out", dir.string()});
  CHECK(r.code == cli::kExitNoSignal);
}

TEST_CASE("bad input exits with 2 and names the field") {
  const fs::path dir = scratch("bad");
  std::string text = kRun;
  text.replace(text.find("gamma = 35\n"), 11, "");
  write(dir / "run.ini", text);
  Run r = run({"simulate", "--config", (dir / "run.ini").string(), "--out", dir.string()});
  CHECK(r.code == cli::kExitBadInput);
  CHECK(r.err.find("emitter.gamma") != std::string::npos);

  write(dir / "typo.ini", std::string(kRun) + "[coupling2]\nx = 1\n");
  r = run({"simulate", "--config", (dir / "typo.ini").string(), "--out", dir.string()});
  CHECK(r.code == cli::kExitBadInput);

  write(dir / "bad.csv", "detuning_mhz,intensity_cps\n1,2\nnope,3\n");
  r = run({"fit", (dir / "bad.csv").string(), "--gamma", "35", "--out", dir.string()});
  CHECK(r.code == cli::kExitBadInput);
  CHECK(r.err.find("bad.csv:3") != std::string::npos);

  CHECK(run({"simulate"}).code == cli::kExitBadInput);
  CHECK(run({"frobnicate"}).code == cli::kExitBadInput);
  CHECK(run({"simulate", "--config", (dir / "missing.ini").string()}).code == cli::kExitBadInput);
}

TEST_CASE("flat fluorescence file has no peak") {
  const fs::path dir = scratch("nopeak");
  std::ostringstream s;
  s << "detuning_mhz,intensity_cps\n";
  for (int i = 0; i < 50; ++i) s << i << ",100\n";
  write(dir / "flat.csv", s.str());
  CHECK(run({"fit", "--fluorescence", (dir / "flat.csv").string(), "--out", dir.string()}).code == cli::kExitNoSignal);
}

TEST_CASE("polarscan writes per-angle files and a visibility matrix") {
  const fs::path dir = scratch("polar");
  write(dir / "pol.ini", R"([emitter]
gamma = 35
gamma0 = 8
alpha = 0.25
[coupling]
c_amp = 1.0
psi = 1.5707963267948966
i_e = 250000
[grid]
start = -175
stop = 175
points = 201
[polarization]
tip_ellipticity_deg = 12
mol_axis_deg = 20
mol_extinction_ratio = 2
angles = 30
)");
  Run r = run({"polarscan", "--config", (dir / "pol.ini").string(), "--out", (dir / "o").string()});
  REQUIRE(r.code == 0);
  int csvs = 0;
  for (const auto& e : fs::directory_iterator(dir / "o"))
    if (e.path().filename().string().rfind("theta_", 0) == 0) ++csvs;
  CHECK(csvs == 30);
  std::ifstream vm(dir / "o" / "visibility_map.csv");
  std::string line;
  int rows = 0;
  std::getline(vm, line);
  CHECK(std::count(line.begin(), line.end(), ',') == 201);
  while (std::getline(vm, line)) ++rows;
  CHECK(rows == 30);

  // crossed-pair sum column stays constant
  std::ifstream sum(dir / "o" / "polarscan_summary.csv");
  std::getline(sum, line);
  while (std::getline(sum, line)) {
    const double dev = csv::parse_number(line.substr(line.rfind(',') + 1), "dev");
    CHECK(dev < 1e-10);
  }

  // the combined scan feeds the joint fit
  r = run({"fit", "--joint", (dir / "o" / "scan.csv").string(), "--gamma", "35", "--gamma0", "8", "--config",
           (dir / "pol.ini").string(), "--out", (dir / "f").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("joint polarization fit over 30 angles") != std::string::npos);

  // single angle degenerates to a one-row matrix
  r = run({"polarscan", "--config", (dir / "pol.ini").string(), "--theta", "30", "--out", (dir / "one").string()});
  REQUIRE(r.code == 0);
  std::ifstream one(dir / "one" / "visibility_map.csv");
  rows = 0;
  while (std::getline(one, line)) ++rows;
  CHECK(rows == 2);

  write(dir / "badpol.ini", R"([emitter]
gamma = 35
[coupling]
c_amp = 1
psi = 1
i_e = 1
[polarization]
tip_ellipticity_deg = 60
)");
  CHECK(run({"polarscan", "--config", (dir / "badpol.ini").string(), "--out", dir.string()}).code ==
        cli::kExitBadInput);
}

TEST_CASE("report") {
  Run r = run({"report", "--lambda-nm", "615", "--tau-ns", "20", "--gamma", "35", "--alpha", "0.25"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("1.80") != std::string::npos);
  CHECK(r.out.find("7.957") != std::string::npos);
  CHECK(r.out.find("1.759") != std::string::npos);

  // gamma = gamma0 from the lifetime and alpha = 1 give unit enhancement
  r = run({"report", "--lambda-nm", "615", "--tau-ns", "20", "--gamma", "7.957747154594767", "--alpha", "1"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("enhancement_factor                1.0000000000000000e+00") != std::string::npos);

  CHECK(run({"report", "--lambda-nm", "615", "--gamma", "35", "--alpha", "0.25"}).code == cli::kExitBadInput);
}

TEST_CASE("output directory from the environment") {
  const fs::path dir = scratch("env");
  write(dir / "run.ini", kRun);
  setenv(cli::kOutputDirEnv, (dir / "envout").string().c_str(), 1);
  const Run r = run({"simulate", "--config", (dir / "run.ini").string()});
  unsetenv(cli::kOutputDirEnv);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "envout" / "transmission.csv"));
}
