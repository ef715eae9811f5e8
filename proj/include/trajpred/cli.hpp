#pragma once

// Command-line driver. Every path in the run config is resolved against the
// --out directory (default "."), which is also where outputs are written:
//
//   synth        <out>/records.csv
//   preprocess   <out>/<data.samples_dir>/{train,val,test}.bin
//   train        <out>/runs/<variant>/{config.json,losses.csv,checkpoints/}
//   evaluate     <out>/eval/{report.txt,rmse.csv,plot.csv}
//   predict      <out>/predictions.csv
//   export-plot  <out>/plot.csv
//
// Wall-clock timestamps go only to the run.log sidecar next to the outputs.

#include <string>
#include <vector>

namespace trajpred {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace trajpred
