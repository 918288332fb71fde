// Walks once around the twistor sphere at a Taub-NUT point, printing the
// rotation-frame phase and the holomorphic pairing of a real section.

#include <cstdio>

#include "hk/zoo.hpp"

int main() {
  using namespace hk;
  const ZooModel m = get_model("taub-nut");
  const RVec x = m.chart.center();
  const HoloSympFamily f = m.family().at(x);
  const PointStructure ps = metric_from_family(f);
  const QuaternionicTriple& t = ps.triple;

  const CMat p10 = 0.5 * (CMat::Identity(4, 4) - I * t.j3.cast<cplx>());
  const CVec a = p10 * CVec::Unit(4, 0);
  const CVec b = p10 * CVec::Unit(4, 1);

  std::printf("metric signature (%d, %d) at x = %s\n", ps.signature.positive, ps.signature.negative,
              format_point(x).c_str());
  std::printf("%8s %8s %10s %12s %22s\n", "|zeta|", "arg", "theta", "dim ker", "omega_+(v_a, v_b)");
  for (int k = 0; k < 8; ++k) {
    const cplx z = std::polar(0.5 + 0.25 * k, 0.8 * k);
    const RotationFrame fr = rotation_frame(t, ps.sympl, z);
    const RealSection sa = real_section(t, a, z);
    const RealSection sb = real_section(t, b, z);
    const cplx p = f.omega_plus(sa.v, sb.v);
    std::printf("%8.3f %8.3f %10.6f %12d %10.6f%+10.6fi\n", std::abs(z), std::arg(z), fr.theta, kernel_dimension(f, z),
                p.real(), p.imag());
  }
  return 0;
}
