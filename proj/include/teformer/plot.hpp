#pragma once

#include <string>
#include <vector>

namespace teformer {

// Static PNG charts with axes and numeric tick labels (digits only; titles
// go into the file name).

void plot_series(const std::string& path, const std::vector<double>& values, const std::string& title);
void plot_bars(const std::string& path, const std::vector<double>& values, const std::string& title);

}  // namespace teformer
