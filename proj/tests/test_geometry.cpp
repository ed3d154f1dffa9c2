#include "motiongs/geometry.hpp"

#include "doctest.h"
#include "oracles.hpp"

using namespace mgs;

TEST_CASE("quaternion to rotation: identity and quarter turn") {
  CHECK((quat_to_rotation({1, 0, 0, 0}) - Mat3::Identity()).norm() == 0.0);

  const double h = std::sqrt(2.0) / 2.0;
  const Mat3 R = quat_to_rotation({h, 0, 0, h});
  const Vec3 v = R * Vec3(1, 0, 0);
  CHECK(v.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(v.y() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(v.z() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("quaternion to rotation matches the Rodrigues oracle") {
  oracle::Rng rng(11);
  for (int k = 0; k < 50; ++k) {
    const Quat q = rng.quat();
    const Mat3 R = quat_to_rotation(q);
    const Mat3 Ro = oracle::rodrigues_from_quat(q.w, q.x, q.y, q.z);
    CHECK((R - Ro).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("quaternion double cover and zero-norm rejection") {
  oracle::Rng rng(12);
  for (int k = 0; k < 20; ++k) {
    const Quat q = rng.quat();
    const Quat nq{-q.w, -q.x, -q.y, -q.z};
    CHECK((quat_to_rotation(q) - quat_to_rotation(nq)).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK_THROWS_AS(quat_to_rotation({0, 0, 0, 0}), ValidationError);
}

TEST_CASE("normalize is idempotent") {
  oracle::Rng rng(13);
  for (int k = 0; k < 20; ++k) {
    Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    q.w += 2.0;
    const Quat n1 = q.normalized();
    const Quat n2 = n1.normalized();
    CHECK(std::abs(n1.norm() - 1.0) < 1e-12);
    CHECK(std::abs(n2.w - n1.w) < 1e-12);
    CHECK(std::abs(n2.x - n1.x) < 1e-12);
  }
}

TEST_CASE("quat_rotation_backward matches finite differences") {
  oracle::Rng rng(14);
  for (int k = 0; k < 20; ++k) {
    Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    q.w += 1.5;
    Mat3 G;
    for (int i = 0; i < 9; ++i) {
      G(i / 3, i % 3) = rng.normal();
    }
    const Vec4 g = quat_rotation_backward(q, G);
    double* comps[4] = {&q.w, &q.x, &q.y, &q.z};
    for (int c = 0; c < 4; ++c) {
      const double x0 = *comps[c];
      const double fd = oracle::central_diff(
          [&](double x) {
            *comps[c] = x;
            const double val = (G.array() * quat_to_rotation(q).array()).sum();
            *comps[c] = x0;
            return val;
          },
          x0);
      CHECK(oracle::grad_close(g[c], fd, 1e-6, 1e-9));
    }
  }
}

TEST_CASE("se3 exp: zero twist and pure rotation") {
  const SE3 id = se3_exp(Vec6::Zero());
  CHECK(id.trans.norm() == 0.0);
  CHECK((id.rotation() - Mat3::Identity()).cwiseAbs().maxCoeff() == 0.0);

  Vec6 xi = Vec6::Zero();
  xi[2] = M_PI / 2.0;
  const SE3 T = se3_exp(xi);
  CHECK(T.trans.norm() == doctest::Approx(0.0));
  const Vec3 v = T.rotation() * Vec3(1, 0, 0);
  CHECK(v.y() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("se3 exp matches the 4x4 matrix exponential oracle") {
  oracle::Rng rng(15);
  for (int k = 0; k < 40; ++k) {
    Vec6 xi;
    for (int i = 0; i < 6; ++i) {
      xi[i] = rng.uniform(-1.0, 1.0);
    }
    const Mat4 Me = oracle::expm4(oracle::twist_matrix(xi));
    const Mat4 M = se3_exp(xi).matrix();
    CHECK((M - Me).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("se3 exp/log round trip and inverse composition") {
  oracle::Rng rng(16);
  for (int k = 0; k < 40; ++k) {
    Vec6 xi;
    for (int i = 0; i < 6; ++i) {
      xi[i] = rng.uniform(-0.9, 0.9);
    }
    if (xi.head<3>().norm() > 0.95) {
      xi *= 0.5;
    }
    const Vec6 back = se3_log(se3_exp(xi));
    CHECK((back - xi).cwiseAbs().maxCoeff() < 1e-8);

    const SE3 T = se3_exp(xi);
    const Mat4 I = (T * T.inverse()).matrix();
    CHECK((I - Mat4::Identity()).cwiseAbs().maxCoeff() < 1e-10);

    const Mat4 I2 = (se3_exp(xi) * se3_exp(Vec6(-xi))).matrix();
    CHECK((I2 - Mat4::Identity()).cwiseAbs().maxCoeff() < 1e-9);

    const Vec3 p = rng.vec3(-2, 2);
    CHECK((T.inverse().act(T.act(p)) - p).norm() < 1e-10);
  }
}

TEST_CASE("se3 right jacobian: exp(xi + d) == exp(xi) exp(J d) to first order") {
  oracle::Rng rng(17);
  for (int k = 0; k < 20; ++k) {
    Vec6 xi, d;
    for (int i = 0; i < 6; ++i) {
      xi[i] = rng.uniform(-0.6, 0.6);
      d[i] = rng.uniform(-1.0, 1.0);
    }
    const double eps = 1e-6;
    d *= eps;
    const Mat6 J = se3_right_jacobian(xi);
    const Mat4 lhs = se3_exp(Vec6(xi + d)).matrix();
    const Mat4 rhs = (se3_exp(xi) * se3_exp(Vec6(J * d))).matrix();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-11);
  }
}

namespace {

Camera test_camera() {
  Camera cam;
  cam.fx = 100;
  cam.fy = 100;
  cam.cx = 50;
  cam.cy = 50;
  cam.width = 100;
  cam.height = 100;
  return cam;
}

}  // namespace

TEST_CASE("project: optical axis and similar triangles") {
  const Camera cam = test_camera();
  const Projection p0 = project(cam, {0, 0, 1});
  CHECK(p0.pixel.x() == 50.0);
  CHECK(p0.pixel.y() == 50.0);
  CHECK(p0.depth == 1.0);

  const Projection p1 = project(cam, {0.1, 0, 1});
  CHECK(p1.pixel.x() == doctest::Approx(60.0).epsilon(1e-14));
  CHECK(p1.pixel.y() == doctest::Approx(50.0));
}

TEST_CASE("project rejects points behind the near plane") {
  const Camera cam = test_camera();
  CHECK_THROWS_AS(project(cam, {0, 0, -1.0}), BehindCameraError);
  CHECK_THROWS_AS(project(cam, {0, 0, 0.0}), BehindCameraError);
  CHECK_FALSE(try_project(cam, {0, 0, -1.0}).has_value());
}

TEST_CASE("unproject: axis case, inverse example, and round trips") {
  const Camera cam = test_camera();
  CHECK((unproject(cam, {50, 50}, 3.0) - Vec3(0, 0, 3)).norm() < 1e-14);
  CHECK((unproject(cam, {60, 50}, 2.0) - Vec3(0.2, 0, 2)).norm() < 1e-14);
  CHECK_THROWS_AS(unproject(cam, {10, 10}, 0.0), ValidationError);

  oracle::Rng rng(18);
  Camera rc = test_camera();
  rc.extrinsics.rot = rng.quat();
  rc.extrinsics.trans = rng.vec3(-0.5, 0.5);
  for (int gy = 0; gy < 16; ++gy) {
    for (int gx = 0; gx < 16; ++gx) {
      const Vec2 px(gx * 6.0 + 2.0, gy * 6.0 + 2.0);
      const double depth = rng.uniform(0.5, 5.0);
      const Vec3 X = unproject(rc, px, depth);
      const Projection back = project(rc, X);
      CHECK((back.pixel - px).norm() < 1e-8);
      CHECK(back.depth == doctest::Approx(depth).epsilon(1e-10));
    }
  }

  for (int k = 0; k < 30; ++k) {
    Camera c2 = test_camera();
    c2.extrinsics.rot = rng.quat();
    c2.extrinsics.trans = rng.vec3(-0.3, 0.3);
    const Vec3 X = rng.vec3(-1, 1) + Vec3(0, 0, 3);
    const auto pr = try_project(c2, X);
    if (!pr) {
      continue;
    }
    CHECK((unproject(c2, pr->pixel, pr->depth) - X).norm() < 1e-8);
  }
}

TEST_CASE("project_jacobian: on-axis value, finite differences, 1/z scaling") {
  const Camera cam = test_camera();
  const Mat23 J0 = project_jacobian(cam, {0, 0, 1});
  CHECK(J0(0, 0) == 100.0);
  CHECK(J0(1, 1) == 100.0);
  CHECK(J0(0, 2) == 0.0);

  oracle::Rng rng(19);
  for (int k = 0; k < 100; ++k) {
    Vec3 xc = rng.vec3(-0.8, 0.8);
    xc.z() = rng.uniform(0.5, 4.0);
    const Mat23 J = project_jacobian(cam, xc);
    for (int c = 0; c < 3; ++c) {
      for (int r = 0; r < 2; ++r) {
        const double x0 = xc[c];
        const double fd = oracle::central_diff(
            [&](double x) {
              Vec3 q = xc;
              q[c] = x;
              return r == 0 ? cam.fx * q.x() / q.z() + cam.cx
                            : cam.fy * q.y() / q.z() + cam.cy;
            },
            x0);
        CHECK(oracle::grad_close(J(r, c), fd, 1e-5, 1e-8));
      }
    }
    Vec3 x2 = xc;
    x2.z() *= 2.0;
    const Mat23 J2 = project_jacobian(cam, x2);
    CHECK(J2(0, 0) == doctest::Approx(J(0, 0) / 2).epsilon(1e-12));
    CHECK(J2(1, 1) == doctest::Approx(J(1, 1) / 2).epsilon(1e-12));
  }
}

TEST_CASE("camera validation") {
  Camera cam = test_camera();
  CHECK_NOTHROW(cam.validate());
  cam.fx = -1;
  CHECK_THROWS_AS(cam.validate(), ValidationError);
  cam = test_camera();
  cam.cx = 200;
  CHECK_THROWS_AS(cam.validate(), ValidationError);
}

TEST_CASE("quat_from_rotation round trips") {
  oracle::Rng rng(20);
  for (int k = 0; k < 30; ++k) {
    const Quat q = rng.quat();
    const Mat3 R = quat_to_rotation(q);
    const Quat back = quat_from_rotation(R);
    CHECK((quat_to_rotation(back) - R).cwiseAbs().maxCoeff() < 1e-12);
  }
}
