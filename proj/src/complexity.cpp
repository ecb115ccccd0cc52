#include "ofexi/complexity.hpp"

#include <numeric>
#include <stdexcept>

namespace ofexi::complexity {

namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

double first_layer_sum(const RlNetShape& net) {
  return net.theta_sums.empty() ? net.out_dim : net.theta_sums.front();
}

}  // namespace

double NetShape::sum_o() const { return sum(theta_o); }
double NetShape::sum_oa() const { return sum(theta_oa); }

double c_phi_o(const NetShape& s) {
  double c = 0.0;
  double before = 0.0;
  for (double t : s.theta_o) {
    c += (s.d_o + before) * (1.0 + t) + 3.0 * t;
    before += t;
  }
  return c;
}

double c_phi_oa(const NetShape& s) {
  double c = 0.0;
  double before = 0.0;
  const double base = s.d_o + s.sum_o() + s.d_a;
  for (double u : s.theta_oa) {
    c += (base + before) * (1.0 + u) + 3.0 * u;
    before += u;
  }
  return c;
}

double c_pred(const NetShape& s) {
  return (1.0 + s.d_o + s.d_a + s.sum_o() + s.sum_oa()) * s.d_o;
}

double d_input_x(const NetShape& s, FeatureInput takes) {
  const double z_o = s.d_o + s.sum_o();
  return takes == FeatureInput::z_o ? z_o : z_o + s.d_a + s.sum_oa();
}

double c_x_ofe(const NetShape& s, const RlNetShape& net) {
  return (1.0 + d_input_x(s, net.takes)) * first_layer_sum(net);
}

double c_rl_net(const NetShape& s, const RlNetShape& net) {
  if (net.theta_sums.empty()) return (1.0 + d_input_x(s, net.takes)) * net.out_dim;
  double c = c_x_ofe(s, net);
  for (std::size_t l = 0; l + 1 < net.theta_sums.size(); ++l) {
    c += (1.0 + net.theta_sums[l]) * net.theta_sums[l + 1];
  }
  c += (1.0 + net.theta_sums.back()) * net.out_dim;
  return c;
}

double c_ofe_total(const NetShape& s) {
  double deploy = c_phi_o(s);
  double training = c_phi_oa(s) + c_pred(s);
  for (const auto& net : s.rl) {
    if (net.is_policy) {
      deploy += c_x_ofe(s, net);
    } else {
      training += c_x_ofe(s, net);
    }
  }
  return deploy + s.rho * training;
}

double log_gamma_o(std::size_t l, const NetShape& s) {
  if (l >= s.theta_o.size()) throw std::out_of_range("log_gamma_o: layer index");
  NetShape probe = s;
  probe.theta_o[l] = 1.0;
  const double at_one = c_ofe_total(probe);
  probe.theta_o[l] = 0.0;
  const double at_zero = c_ofe_total(probe);
  return -s.nu_ofe * (at_one - at_zero);
}

double log_gamma_oa(std::size_t l, const NetShape& s) {
  if (l >= s.theta_oa.size()) throw std::out_of_range("log_gamma_oa: layer index");
  NetShape probe = s;
  probe.theta_oa[l] = 1.0;
  const double at_one = c_ofe_total(probe);
  probe.theta_oa[l] = 0.0;
  const double at_zero = c_ofe_total(probe);
  return -s.nu_ofe * (at_one - at_zero);
}

double log_gamma_o_closed_form(std::size_t l, const NetShape& s) {
  if (l >= s.theta_o.size()) throw std::out_of_range("log_gamma_o_closed_form: layer index");
  const double L_o = static_cast<double>(s.theta_o.size());
  const double L_oa = static_cast<double>(s.theta_oa.size());
  const double layer = static_cast<double>(l + 1);
  double before = 0.0;
  for (std::size_t i = 0; i < l; ++i) before += s.theta_o[i];
  double policy_first = 0.0;
  double other_z_o_first = 0.0;
  for (const auto& net : s.rl) {
    if (net.is_policy) {
      policy_first += first_layer_sum(net);
    } else if (net.takes == FeatureInput::z_o) {
      other_z_o_first += first_layer_sum(net);
    }
  }
  return -s.nu_ofe * ((1.0 + s.rho) * s.d_o + before + L_o - layer + s.rho * L_oa + 3.0 +
                      policy_first + s.rho * other_z_o_first);
}

double log_gamma_oa_closed_form(std::size_t l, const NetShape& s) {
  if (l >= s.theta_oa.size()) throw std::out_of_range("log_gamma_oa_closed_form: layer index");
  const double L_oa = static_cast<double>(s.theta_oa.size());
  const double layer = static_cast<double>(l + 1);
  double before = 0.0;
  for (std::size_t i = 0; i < l; ++i) before += s.theta_oa[i];
  double z_oa_first = 0.0;
  for (const auto& net : s.rl) {
    if (net.takes == FeatureInput::z_oa) z_oa_first += first_layer_sum(net);
  }
  return -s.nu_ofe * s.rho *
         (2.0 * s.d_o + s.d_a + s.sum_o() + before + L_oa - layer + 3.0 + z_oa_first);
}

double log_gamma_x(std::size_t l, const NetShape& s, const RlNetShape& net) {
  const std::size_t L = net.theta_sums.size();
  if (l >= L) throw std::out_of_range("log_gamma_x: layer index");
  double coeff = 0.0;
  if (l == 0) coeff += 1.0 + d_input_x(s, net.takes);
  if (l > 0) coeff += 1.0 + net.theta_sums[l - 1];
  if (l + 1 == L) coeff += net.out_dim;
  return -net.nu * coeff;
}

}  // namespace ofexi::complexity
