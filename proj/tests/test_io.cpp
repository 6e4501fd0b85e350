#include "evop/io.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "evop/systems.hpp"

using namespace evop;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "evop_io_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("csv round trip is value-exact") {
  auto traj = lorenz63_trajectory(50, 0.01, {1.2, -0.7, 22.9});
  auto path = temp_file("roundtrip.csv");
  save_trajectory_csv(traj, path);
  auto back = load_trajectory_csv(path, traj.dt());
  REQUIRE(back.length() == traj.length());
  REQUIRE(back.dim() == traj.dim());
  CHECK(back.states() == traj.states());
  CHECK(back.dt() == traj.dt());
}

TEST_CASE("binary round trip is bit-exact and keeps dt") {
  auto traj = ou_trajectory(128, 0.05, 2.0, 0.7, 0.1, 9);
  auto path = temp_file("roundtrip.bin");
  save_trajectory_binary(traj, path);
  auto back = load_trajectory_binary(path);
  CHECK(back.states() == traj.states());
  CHECK(back.dt() == traj.dt());
}

TEST_CASE("csv of 3 columns and 5 rows loads as 5 x 3") {
  auto path = temp_file("small.csv");
  std::ofstream os(path);
  os << "x0,x1,x2\n";
  for (int i = 0; i < 5; ++i) os << i << "," << 2 * i << "," << 3 * i << "\n";
  os.close();
  auto traj = load_trajectory_csv(path);
  CHECK(traj.length() == 5);
  CHECK(traj.dim() == 3);
  CHECK(traj.states()(4, 2) == 12.0);
  CHECK(traj.dt() == 1.0);
}

TEST_CASE("csv parse errors carry locations") {
  SECTION("non-finite entry") {
    auto path = temp_file("nan.csv");
    std::ofstream os(path);
    os << "x0,x1\n1,2\n3,nan\n5,6\n";
    os.close();
    try {
      load_trajectory_csv(path);
      FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("row 2") != std::string::npos);
      CHECK(msg.find("column 1") != std::string::npos);
    }
  }
  SECTION("dimension mismatch") {
    auto path = temp_file("ragged.csv");
    std::ofstream os(path);
    os << "x0,x1\n1,2\n3\n";
    os.close();
    CHECK_THROWS_AS(load_trajectory_csv(path), std::invalid_argument);
  }
  SECTION("malformed header") {
    auto path = temp_file("badheader.csv");
    std::ofstream os(path);
    os << "x0,,x2\n1,2,3\n4,5,6\n";
    os.close();
    CHECK_THROWS_AS(load_trajectory_csv(path), std::invalid_argument);
  }
  SECTION("missing file") {
    CHECK_THROWS_AS(load_trajectory_csv(temp_file("nope.csv")),
                    std::invalid_argument);
  }
}

TEST_CASE("binary rejects foreign and truncated files") {
  auto path = temp_file("foreign.bin");
  std::ofstream os(path, std::ios::binary);
  os << "not an evop file at all";
  os.close();
  CHECK_THROWS_AS(load_trajectory_binary(path), std::invalid_argument);

  auto traj = ou_trajectory(16, 0.1, 1.0, 1.0, 0.0, 1);
  auto full = temp_file("full.bin");
  save_trajectory_binary(traj, full);
  // Truncate mid-payload.
  auto truncated = temp_file("truncated.bin");
  std::ifstream in(full, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  std::ofstream out(truncated, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  out.close();
  CHECK_THROWS_AS(load_trajectory_binary(truncated), std::invalid_argument);
}

TEST_CASE("format helpers") {
  CHECK(format_from_name("csv") == TrajectoryFormat::csv);
  CHECK(format_from_name("binary") == TrajectoryFormat::binary);
  CHECK_THROWS_AS(format_from_name("hdf5"), std::invalid_argument);
  CHECK(format_from_path("traj.csv") == TrajectoryFormat::csv);
  CHECK(format_from_path("traj.bin") == TrajectoryFormat::binary);
}
