#include "hsfuse/losses.hpp"

#include <cmath>

namespace hsfuse {

void LossWeights::validate() const {
  check(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0,
        "loss weights must be nonnegative");
  check(epsilon > 0.0 && epsilon < 0.5,
        "sparsity target must lie in (0, 0.5)");
}

template <typename T>
double l1_mean(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape == b.shape, "l1_mean: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    acc += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
  return acc / static_cast<double>(a.data.size());
}

template <typename T>
double loss_reconstruction(const Tensor<T>& x, const Tensor<T>& y,
                           const Tensor<T>& fx, const Tensor<T>& gy) {
  return l1_mean(fx, x) + l1_mean(gy, y);
}

namespace {

template <typename T>
double asc_branch(const Tensor<T>& s) {
  const std::size_t plane = s.shape.plane();
  double acc = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    double sum = 0.0;
    for (int c = 0; c < s.shape.c; ++c) sum += s.data[c * plane + i];
    acc += std::abs(1.0 - sum);
  }
  return acc / static_cast<double>(plane);
}

// same floor the graph op uses, so the two routes agree on clamped values
constexpr double kKlFloor = 1e-6;

template <typename T>
double kl_branch(const Tensor<T>& s, double rho) {
  double acc = 0.0;
  for (const T v : s.data) {
    const double a =
        std::min(1.0 - kKlFloor, std::max(kKlFloor, static_cast<double>(v)));
    acc += rho * std::log(rho / a) +
           (1.0 - rho) * std::log((1.0 - rho) / (1.0 - a));
  }
  return acc / static_cast<double>(s.data.size());
}

}  // namespace

template <typename T>
double loss_asc(const Tensor<T>& s_hs, const Tensor<T>& s_ms) {
  return asc_branch(s_hs) + asc_branch(s_ms);
}

template <typename T>
double loss_sparsity(const Tensor<T>& s_hs, const Tensor<T>& s_ms,
                     double epsilon) {
  check(epsilon > 0.0 && epsilon < 0.5,
        "sparsity target must lie in (0, 0.5)");
  return kl_branch(s_hs, epsilon) + kl_branch(s_ms, epsilon);
}

template <typename T>
double loss_consistency(const Tensor<T>& x, const Tensor<T>& y,
                        const Tensor<T>& x_hat, const Tensor<T>& y_hat,
                        const Tensor<T>& u_hs, const Tensor<T>& u_ms) {
  return l1_mean(u_ms, u_hs) + l1_mean(x_hat, x) + l1_mean(y_hat, y);
}

double total_loss(const LossParts& parts, const LossWeights& w) {
  w.validate();
  return parts.recon + w.alpha * parts.asc + w.beta * parts.sparsity +
         w.gamma * parts.consistency;
}

template <typename T>
LossParts LossNodes<T>::parts(const Tape<T>& t) const {
  LossParts p;
  p.recon = t.scalar_value(recon);
  p.asc = t.scalar_value(asc);
  p.sparsity = t.scalar_value(sparsity);
  p.consistency = consistency >= 0 ? t.scalar_value(consistency) : 0.0;
  return p;
}

template <typename T>
LossNodes<T> attach_losses(Network<T>& net, const LossWeights& w,
                           const Tensor<T>* mask_hs, const Tensor<T>* mask_ms) {
  w.validate();
  Tape<T>& t = net.tape();
  LossNodes<T> out;

  out.recon = t.add(t.l1_loss(net.recon_hsi(), net.x(), mask_hs),
                    t.l1_loss(net.recon_msi(), net.y(), mask_ms));

  const Shape hs = t.shape(net.abund_hsi());
  const Shape ms = t.shape(net.abund_msi());
  Tensor<T> ones_hs(Shape{1, hs.h, hs.w});
  for (auto& v : ones_hs.data) v = T(1);
  Tensor<T> ones_ms(Shape{1, ms.h, ms.w});
  for (auto& v : ones_ms.data) v = T(1);
  const auto ones_hs_id = t.leaf(ones_hs, false);
  const auto ones_ms_id = t.leaf(ones_ms, false);
  out.asc = t.add(
      t.l1_loss(t.reduce_sum(net.abund_hsi(), Reduce::Channels), ones_hs_id,
                mask_hs),
      t.l1_loss(t.reduce_sum(net.abund_msi(), Reduce::Channels), ones_ms_id,
                mask_ms));

  const T eps = static_cast<T>(w.epsilon);
  out.sparsity = t.add(t.kl_sparsity(net.abund_hsi(), eps, mask_hs),
                       t.kl_sparsity(net.abund_msi(), eps, mask_ms));

  auto total = t.add(out.recon, t.scale(out.asc, static_cast<T>(w.alpha)));
  total = t.add(total, t.scale(out.sparsity, static_cast<T>(w.beta)));

  if (net.config().use_ssc) {
    out.consistency =
        t.add(t.add(t.l1_loss(net.u_ms(), net.u_hs(), mask_hs),
                    t.l1_loss(net.x_hat(), net.x(), mask_hs)),
              t.l1_loss(net.y_hat(), net.y(), mask_ms));
    total = t.add(total, t.scale(out.consistency, static_cast<T>(w.gamma)));
  }
  out.total = total;
  return out;
}

template double l1_mean(const Tensor<float>&, const Tensor<float>&);
template double l1_mean(const Tensor<double>&, const Tensor<double>&);
template double loss_reconstruction(const Tensor<float>&, const Tensor<float>&,
                                    const Tensor<float>&, const Tensor<float>&);
template double loss_reconstruction(const Tensor<double>&,
                                    const Tensor<double>&,
                                    const Tensor<double>&,
                                    const Tensor<double>&);
template double loss_asc(const Tensor<float>&, const Tensor<float>&);
template double loss_asc(const Tensor<double>&, const Tensor<double>&);
template double loss_sparsity(const Tensor<float>&, const Tensor<float>&,
                              double);
template double loss_sparsity(const Tensor<double>&, const Tensor<double>&,
                              double);
template double loss_consistency(const Tensor<float>&, const Tensor<float>&,
                                 const Tensor<float>&, const Tensor<float>&,
                                 const Tensor<float>&, const Tensor<float>&);
template double loss_consistency(const Tensor<double>&, const Tensor<double>&,
                                 const Tensor<double>&, const Tensor<double>&,
                                 const Tensor<double>&, const Tensor<double>&);
template struct LossNodes<float>;
template struct LossNodes<double>;
template LossNodes<float> attach_losses(Network<float>&, const LossWeights&,
                                        const Tensor<float>*,
                                        const Tensor<float>*);
template LossNodes<double> attach_losses(Network<double>&, const LossWeights&,
                                         const Tensor<double>*,
                                         const Tensor<double>*);

}  // namespace hsfuse
