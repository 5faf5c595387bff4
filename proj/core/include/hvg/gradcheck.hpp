#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hvg/graph.hpp"

namespace hvg {

/// Builds a scalar loss from the given leaves; must be pure in the leaf values.
using LossBuilder = std::function<Graph::Id(Graph&, const std::vector<Graph::Id>&)>;

struct GradCheckCase {
    std::string label;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckCase> cases;
    bool all_pass = true;
    double worst_err = 0.0;
    std::string worst_label;

    void add(GradCheckCase c);
};

/// Compares backprop against central finite differences (f(x+h)-f(x-h))/2h on
/// every element of every input. Error per element is |a-n|/max(1,|a|,|n|).
GradCheckCase gradcheck(const std::string& label, const std::vector<Tensor>& inputs, const LossBuilder& build,
                        double h = 1e-5, double tol = 1e-4);

/// Random cases for every differentiable op plus random mixed-op graphs.
GradCheckReport run_op_gradchecks(uint64_t seed, int cases_per_op, double h = 1e-5, double tol = 1e-4);

}  // namespace hvg
