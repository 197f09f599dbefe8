// Line-delimited JSON label server used by the remote oracle tests.
// usage: remote_oracle_stub MODEL [--delay-ms N] [--garbage-at N]

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include "ipguard/model_io.hpp"
#include "ipguard/oracle.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: remote_oracle_stub MODEL [--delay-ms N] [--garbage-at N]\n";
    return 2;
  }
  int delay_ms = 0;
  long garbage_at = -1;
  for (int a = 2; a + 1 < argc; a += 2) {
    const std::string flag = argv[a];
    if (flag == "--delay-ms") delay_ms = std::atoi(argv[a + 1]);
    if (flag == "--garbage-at") garbage_at = std::atol(argv[a + 1]);
  }
  const auto oracle = ipguard::make_oracle(ipguard::load_any_model(argv[1]));
  std::string line;
  for (long served = 0; std::getline(std::cin, line); ++served) {
    if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    if (served == garbage_at) {
      std::cout << "not json" << std::endl;
      continue;
    }
    const auto point = nlohmann::json::parse(line).at("point").get<std::vector<double>>();
    std::cout << nlohmann::json{{"label", oracle->query(point)}}.dump() << std::endl;
  }
  return 0;
}
