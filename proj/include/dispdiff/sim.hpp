#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "dispdiff/cloth.hpp"
#include "dispdiff/geom.hpp"

// Mass-spring cloth dynamics: semi-implicit Euler with per-step velocity
// damping, penalty collision against capsules and the ground plane, and
// kinematically attached grippers driven by a clamped PD controller.

namespace dispdiff {

struct SimError : std::runtime_error {
  explicit SimError(const std::string& what) : std::runtime_error(what) {}
};

struct SimParams {
  double dt = 1.0 / 240.0;
  int substeps = 4;  // internal integration substeps per dt; a particle can
                     // touch ~12 springs, so the raw dt sits past the
                     // explicit stability limit
  double gravity = 9.8;
  double particle_mass = 0.01;
  double k_structural = 800.0;
  double k_shear = 400.0;
  double k_bend = 200.0;
  double damping = 0.98;           // per-dt velocity retention
  double k_collision = 1000.0;
  double contact_tangent_damping = 0.5;  // tangential velocity retention while in contact
  double gripper_mass = 1.0;
  double pd_kp = 50.0;
  double pd_kv = 50.0;
  double max_force = 5.0;  // per-axis clamp
};

struct Capsule {
  Vec3 a, b;
  double radius = 0.1;
};

struct Gripper {
  Vec3 pos, vel;
  int vertex = -1;
  bool attached = true;
};

enum class Phase { Manipulation, Release };

struct SimState {
  std::vector<Vec3> pos;
  std::vector<Vec3> vel;
  std::vector<Spring> springs;
  std::vector<Gripper> grippers;
  std::vector<Capsule> colliders;
  bool has_ground = true;
  double ground_z = 0.0;
  double time = 0.0;
  long step_count = 0;
  Phase phase = Phase::Manipulation;
};

// F = kp (target - pos) + kv (0 - vel), clamped per axis. The clamp is on
// each axis separately, not on the overall magnitude.
inline Vec3 pd_control(const Vec3& pos, const Vec3& vel, const Vec3& target, const SimParams& p) {
  Vec3 f = p.pd_kp * (target - pos) - p.pd_kv * vel;
  auto clamp = [&](double v) {
    if (v > p.max_force) return p.max_force;
    if (v < -p.max_force) return -p.max_force;
    return v;
  };
  return {clamp(f.x), clamp(f.y), clamp(f.z)};
}

inline double spring_stiffness(const SimParams& p, SpringClass cls) {
  switch (cls) {
    case SpringClass::Structural: return p.k_structural;
    case SpringClass::Shear: return p.k_shear;
    case SpringClass::Bend: return p.k_bend;
  }
  return p.k_structural;
}

// One simulation step of length dt, integrated in `substeps` explicit
// substeps. Gripper targets map one-to-one onto state.grippers; they are
// ignored for detached grippers.
inline void sim_step(SimState& s, const std::vector<Vec3>& targets, const SimParams& p) {
  const std::size_t n = s.pos.size();
  const int nsub = p.substeps < 1 ? 1 : p.substeps;
  const double h = p.dt / nsub;
  const double damp = std::pow(p.damping, 1.0 / nsub);
  const double inv_m = 1.0 / p.particle_mass;

  std::vector<Vec3> force(n);
  std::vector<Vec3> contact_normal(n);
  std::vector<bool> in_contact(n);

  for (int sub = 0; sub < nsub; ++sub) {
    // grippers: unit-mass points under clamped PD force; the cloth does not
    // pull back on them (they are massless, collision-free bodies in spirit)
    for (std::size_t g = 0; g < s.grippers.size(); ++g) {
      Gripper& gr = s.grippers[g];
      if (!gr.attached) continue;
      Vec3 f = pd_control(gr.pos, gr.vel, targets.at(g), p);
      gr.vel += f * (h / p.gripper_mass);
      gr.pos += gr.vel * h;
    }

    force.assign(n, Vec3{0.0, 0.0, -p.gravity * p.particle_mass});
    in_contact.assign(n, false);

    for (const Spring& sp : s.springs) {
      Vec3 d = s.pos[std::size_t(sp.b)] - s.pos[std::size_t(sp.a)];
      double len = d.norm();
      if (len <= 1e-12) continue;
      double k = spring_stiffness(p, sp.cls);
      Vec3 f = d * (k * (len - sp.rest_length) / len);
      force[std::size_t(sp.a)] += f;
      force[std::size_t(sp.b)] -= f;
    }

    for (std::size_t i = 0; i < n; ++i) {
      for (const Capsule& c : s.colliders) {
        Vec3 q = closest_point_on_segment(s.pos[i], c.a, c.b);
        Vec3 d = s.pos[i] - q;
        double dist = d.norm();
        double depth = c.radius - dist;
        if (depth > 0.0 && dist > 1e-12) {
          Vec3 nrm = d * (1.0 / dist);
          force[i] += nrm * (p.k_collision * depth);
          in_contact[i] = true;
          contact_normal[i] = nrm;
        }
      }
      if (s.has_ground) {
        double depth = s.ground_z - s.pos[i].z;
        if (depth > 0.0) {
          force[i] += Vec3{0.0, 0.0, p.k_collision * depth};
          in_contact[i] = true;
          contact_normal[i] = Vec3{0.0, 0.0, 1.0};
        }
      }
    }

    for (std::size_t i = 0; i < n; ++i) {
      Vec3 v = (s.vel[i] + force[i] * (inv_m * h)) * damp;
      if (in_contact[i] && p.contact_tangent_damping < 1.0) {
        // crude stiction: damp the sliding component while touching something
        Vec3 vn = contact_normal[i] * v.dot(contact_normal[i]);
        Vec3 vt = v - vn;
        v = vn + vt * p.contact_tangent_damping;
      }
      s.vel[i] = v;
      s.pos[i] += s.vel[i] * h;
    }

    // attached vertices track their gripper exactly
    for (const Gripper& gr : s.grippers) {
      if (!gr.attached || gr.vertex < 0) continue;
      s.pos[std::size_t(gr.vertex)] = gr.pos;
      s.vel[std::size_t(gr.vertex)] = gr.vel;
    }
  }

  s.time += p.dt;
  ++s.step_count;

  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(s.pos[i].x) || !std::isfinite(s.pos[i].y) || !std::isfinite(s.pos[i].z))
      throw SimError("sim_step: non-finite particle position at step " +
                     std::to_string(s.step_count) + ", particle " + std::to_string(i));
}

}  // namespace dispdiff
