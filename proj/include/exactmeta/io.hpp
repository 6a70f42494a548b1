#pragma once

#include <string>
#include <vector>

#include "exactmeta/bivariate.hpp"
#include "exactmeta/network.hpp"
#include "exactmeta/univariate.hpp"

namespace exactmeta::io {

// Header `y,variance`.
uni::UnivariateData read_uni_csv(const std::string& path);
void write_uni_csv(const std::string& path, const uni::UnivariateData& data);

// Header `tp,fp,fn,tn` (counts, 0.5 correction applied) or `yA,yB,vA,vB`
// (precomputed logit summaries); detected from the header row.
dta::Data read_dta_csv(const std::string& path);
void write_dta_csv(const std::string& path, const dta::Data& data);

struct NmaInput {
  bool arm_level = false;
  std::vector<net::ArmRecord> arms;          // when arm_level
  std::vector<net::ContrastStudy> studies;   // when contrast-level
  int p = 0;                                 // max treatment id seen
};

// Arm-level header `study,treatment,events,n`, or contrast-level header
// `study,treatments,y,S` with semicolon-separated lists inside the last
// three cells (S flattened row-major).
NmaInput read_nma_csv(const std::string& path);
void write_nma_arm_csv(const std::string& path,
                       const std::vector<net::ArmRecord>& arms);
void write_nma_contrast_csv(const std::string& path,
                            const std::vector<net::ContrastStudy>& studies);

}  // namespace exactmeta::io
