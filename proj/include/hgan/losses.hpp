#pragma once

#include <cmath>
#include <fstream>
#include <string>

#include "hgan/discriminators.hpp"
#include "hgan/tensor.hpp"

namespace hgan {

struct LossWeights {
  double lambda_cycle = 10.0;
  double lambda_identity = 0.5;
};

inline void validate(const LossWeights& w) {
  require(w.lambda_cycle >= 0.0 && w.lambda_identity >= 0.0, Err::InvalidConfig,
          "loss weights must be >= 0");
}

struct LossRecord {
  double d_loss_syn = 0, d_loss_real = 0;
  double g_adv_syn = 0, g_adv_real = 0;
  double cycle = 0, identity = 0;
  double total_g = 0;
};

inline void check_finite(double v, const char* term) {
  if (!std::isfinite(v)) fail(Err::NonFiniteLoss, std::string("non-finite loss term: ") + term);
}

// Least-squares discriminator objective, summed over scales:
//   sum_i 1/2 (Y_i - 1)^2 + 1/2 (Z_i)^2
// where Y_i / Z_i are the means of the real / fake score maps at scale i.
inline Tensor lsgan_discriminator_loss(const ScoreMaps& real_scores, const ScoreMaps& fake_scores) {
  require(!real_scores.maps.empty(), Err::ShapeMismatch, "empty score maps");
  require(real_scores.size() == fake_scores.size(), Err::ShapeMismatch,
          "scale count mismatch between real and fake scores");
  Tensor total = Tensor::scalar(0.0);
  for (size_t i = 0; i < real_scores.size(); ++i) {
    require(real_scores.maps[i].shape() == fake_scores.maps[i].shape(), Err::ShapeMismatch,
            "score map shape mismatch at scale " + std::to_string(i));
    Tensor y = mean_all(real_scores.maps[i]);
    Tensor z = mean_all(fake_scores.maps[i]);
    Tensor term = add(scale(square(add_scalar(y, -1.0)), 0.5), scale(square(z), 0.5));
    total = add(total, term);
  }
  return total;
}

// sum_i 1/2 (Z_i - 1)^2 over the fake score maps.
inline Tensor lsgan_generator_loss(const ScoreMaps& fake_scores) {
  require(!fake_scores.maps.empty(), Err::ShapeMismatch, "empty score maps");
  Tensor total = Tensor::scalar(0.0);
  for (const auto& map : fake_scores.maps) {
    Tensor z = mean_all(map);
    total = add(total, scale(square(add_scalar(z, -1.0)), 0.5));
  }
  return total;
}

// Mean absolute difference; gradient flows as sign(reconstructed - original)/N.
inline Tensor cycle_loss(const Tensor& original, const Tensor& reconstructed) {
  check_same_shape(original, reconstructed, "cycle_loss");
  return mean_all(abs_t(sub(reconstructed, original)));
}

// Same L1 contract as cycle_loss, applied to a generator fed its own target domain.
inline Tensor identity_loss(const Tensor& original, const Tensor& same_domain_output) {
  check_same_shape(original, same_domain_output, "identity_loss");
  return mean_all(abs_t(sub(same_domain_output, original)));
}

inline Tensor total_generator_objective(const Tensor& adv_syn, const Tensor& adv_real,
                                        const Tensor& cycle_s, const Tensor& cycle_r,
                                        const Tensor& id_s, const Tensor& id_r,
                                        const LossWeights& weights) {
  Tensor adv = add(adv_syn, adv_real);
  Tensor cyc = scale(add(cycle_s, cycle_r), weights.lambda_cycle);
  Tensor idt = scale(add(id_s, id_r), weights.lambda_identity);
  return add(add(adv, cyc), idt);
}

inline double total_generator_objective(double adv_syn, double adv_real, double cycle_s,
                                        double cycle_r, double id_s, double id_r,
                                        const LossWeights& weights) {
  for (double v : {adv_syn, adv_real, cycle_s, cycle_r, id_s, id_r}) check_finite(v, "input");
  return adv_syn + adv_real + weights.lambda_cycle * (cycle_s + cycle_r) +
         weights.lambda_identity * (id_s + id_r);
}

inline const char* loss_log_header() {
  return "step,d_loss_syn,d_loss_real,g_adv_syn,g_adv_real,cycle,identity,total_g";
}

inline void append_loss_row(std::ostream& os, int64_t step, const LossRecord& r) {
  os << step << ',' << r.d_loss_syn << ',' << r.d_loss_real << ',' << r.g_adv_syn << ','
     << r.g_adv_real << ',' << r.cycle << ',' << r.identity << ',' << r.total_g << '\n';
}

}  // namespace hgan
