#pragma once

#include "spinlab/core_model.hpp"
#include "spinlab/phase_map.hpp"

#include <string>
#include <vector>

namespace spinlab {

// Bundled demonstration experiments. Each returns a self-contained config;
// run_repro() evaluates one and writes its artifact files.

// Four-token loop demo: prompt "A C B" with identity weights drives the
// context onto the dominant token D within a few iterations.
ModelConfig fig2_config();
int fig2_steps();  // 6

// Good/bad classification demo: three good tokens, one bad candidate,
// prompt "THEY ARE".
ModelConfig fig3_config();

// Slice used by the fig3/fig4 demos: first coordinate pinned to the bad
// candidate's, remaining two coordinates swept over [0,1]^2.
SliceSpec fig3_slice();

// fig3 plus the interaction bias; xi values swept by the demo.
ModelConfig fig4a_config(double xi);
Matrix fig4a_delta();
std::vector<double> fig4a_xis();  // {0, 0.025, 0.05}

// fig3 vocabulary zero-padded to four components, with positional
// encodings mixed in (y = 0.1, base 1000, first position 0). Run long
// enough to see the attractor change mid-stream.
ModelConfig fig4b_config();
SliceSpec fig4b_slice();
int fig4b_steps();  // 100

const std::vector<std::string>& preset_names();

struct PresetResult {
  std::vector<std::string> files;  // artifact names, relative to out_dir
  std::string summary;             // one human-readable line
};

PresetResult run_repro(const std::string& preset, const std::string& out_dir);

}  // namespace spinlab
