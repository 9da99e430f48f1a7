#include <iostream>

#include "ghostlayer/pipeline.hpp"

int main(int argc, char** argv) {
  using namespace ghostlayer;
  try {
    const TransferJob job = parse_config(argc, argv);
    const RunReport report = run_job(job, std::cerr);
    std::cout << "wrote " << report.output_path.string();
    for (const auto& t : report.trace_paths) std::cout << ' ' << t.string();
    std::cout << " (" << report.wall_seconds << " s)\n";
    return exit_code::kSuccess;
  } catch (const HelpRequested& help) {
    std::cout << help.what();
    return exit_code::kSuccess;
  } catch (const Error& e) {
    std::cerr << "ghostlayer: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::bad_alloc&) {
    std::cerr << "ghostlayer: out of memory\n";
    return exit_code::kInput;
  }
}
