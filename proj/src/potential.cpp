#include "phi4/potential.hpp"

#include <sstream>

namespace phi4 {

Potential Potential::gaussian(double c, double eps) {
  if (!(c > 0.0)) throw std::invalid_argument("potential: gaussian needs c > 0");
  if (!(eps >= 0.0)) throw std::invalid_argument("potential: eps must be >= 0");
  Potential p;
  p.kind_ = PotentialKind::gaussian;
  p.c_ = c;
  p.eps_ = eps;
  return p;
}

Potential Potential::bessel(double beta, double eps, int d) {
  // beta > d keeps the real-space kernel bounded; smaller beta is refused.
  if (!(beta > static_cast<double>(d)))
    throw std::invalid_argument("potential: bessel needs beta > d");
  if (!(eps >= 0.0)) throw std::invalid_argument("potential: eps must be >= 0");
  Potential p;
  p.kind_ = PotentialKind::bessel;
  p.beta_ = beta;
  p.eps_ = eps;
  return p;
}

Potential Potential::table(std::map<std::int64_t, double> values, double eps) {
  Potential p;
  p.kind_ = PotentialKind::table;
  p.table_ = std::move(values);
  p.eps_ = eps;
  return p;
}

Potential Potential::table_zero() { return table({}, 1.0); }

Potential Potential::table_delta0() {
  std::map<std::int64_t, double> t;
  t[pack_mode(Ivec{0, 0, 0})] = 1.0;
  return table(std::move(t), 1.0);
}

std::string Potential::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case PotentialKind::gaussian: os << "gaussian(c=" << c_ << ",eps=" << eps_ << ")"; break;
    case PotentialKind::bessel: os << "bessel(beta=" << beta_ << ",eps=" << eps_ << ")"; break;
    case PotentialKind::table: os << "table(" << table_.size() << " entries)"; break;
  }
  return os.str();
}

}  // namespace phi4
