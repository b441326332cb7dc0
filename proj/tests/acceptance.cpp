#include <cstdlib>
#include <iostream>
#include <string>

#include "avsd/verify.hpp"

// Usage: avsd_acceptance [work_dir] [check ids...]
int main(int argc, char** argv) {
  avsd::verify::VerifyOptions opt;
  if (argc > 1) opt.work_dir = argv[1];
  for (int i = 2; i < argc; ++i) opt.only.push_back(std::atoi(argv[i]));
  bool ok = true;
  avsd::verify::run_checks(opt, [&](const avsd::verify::CheckResult& r) {
    std::cout << avsd::verify::format_line(r) << std::endl;
    ok = ok && r.passed;
  });
  return ok ? 0 : 1;
}
