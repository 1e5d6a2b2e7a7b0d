// Regenerates the golden protocol fixtures into the directory given as the
// only argument.
#include <fstream>
#include <iostream>

#include "golden_inputs.hpp"

namespace {

void write(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_golden <output-dir>\n";
    return 1;
  }
  const std::string dir = argv[1];
  write(dir + "/dream_request.json", arena::serialize(golden::dream_request()));
  write(dir + "/dream_response.json", arena::serialize(golden::dream_response()));
  write(dir + "/agent_observation.json", arena::serialize(golden::agent_observation()));
  write(dir + "/agent_plan.json", arena::serialize(golden::agent_plan()));
  std::cout << "wrote 4 fixtures to " << dir << "\n";
  return 0;
}
