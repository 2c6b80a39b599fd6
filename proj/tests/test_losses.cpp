#include <doctest.h>

#include <random>

#include "tetfit/losses.hpp"
#include "tetfit/sdfield.hpp"
#include "test_util.hpp"

using namespace tetfit;
using tetfit::testing::relative_error;

namespace
{
    MatX3 random_points(Index n, std::uint32_t seed)
    {
        std::mt19937 gen(seed);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        MatX3 out(n, 3);
        for (Index i = 0; i < n; ++i)
            for (int a = 0; a < 3; ++a)
                out(i, a) = u(gen);
        return out;
    }

    double brute_chamfer(const MatX3 & p, const MatX3 & q, bool squared)
    {
        auto one_way = [squared](const MatX3 & a, const MatX3 & b) {
            double sum = 0.0;
            for (Index i = 0; i < a.rows(); ++i)
            {
                double best = std::numeric_limits<double>::infinity();
                for (Index j = 0; j < b.rows(); ++j)
                    best = std::min(best, (a.row(i) - b.row(j)).squaredNorm());
                sum += squared ? best : std::sqrt(best);
            }
            return sum / double(a.rows());
        };
        return one_way(p, q) + one_way(q, p);
    }

    double dot_all(const MatX3 & a, const MatX3 & b)
    {
        return (a.array() * b.array()).sum();
    }

    TriangleMesh two_triangles()
    {
        // Areas 1 and 3.
        TriangleMesh m;
        m.positions.resize(6, 3);
        m.positions << 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 1, 6, 0, 1, 0, 1, 1;
        m.triangles.resize(2, 3);
        m.triangles << 0, 1, 2, 3, 4, 5;
        return m;
    }
}

TEST_CASE("sample_surface: single triangle")
{
    TriangleMesh m;
    m.positions.resize(3, 3);
    m.positions << 0, 0, 0, 1, 0, 0, 0, 1, 0;
    m.triangles.resize(1, 3);
    m.triangles << 0, 1, 2;
    const PointSample s = sample_surface(m, 500, 1);
    REQUIRE(s.has_provenance());
    for (Index i = 0; i < s.size(); ++i)
    {
        CHECK(s.faces[i] == 0);
        CHECK(s.barycentrics.row(i).minCoeff() >= 0.0);
        CHECK(s.barycentrics.row(i).sum() == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(s.positions(i, 2) == 0.0);
        CHECK(s.positions(i, 0) + s.positions(i, 1) <= 1.0 + 1e-15);
        CHECK(s.normals.row(i) == Eigen::RowVector3d(0, 0, 1));
    }
}

TEST_CASE("sample_surface: area weighting and determinism")
{
    const TriangleMesh m = two_triangles();
    CHECK(triangle_area(m, 0) == doctest::Approx(1.0));
    CHECK(triangle_area(m, 1) == doctest::Approx(3.0));
    const PointSample s = sample_surface(m, 40000, 7);
    const double count0 = double(std::count(s.faces.begin(), s.faces.end(), Index(0)));
    const double sigma  = std::sqrt(40000 * 0.25 * 0.75);
    CHECK(std::abs(count0 - 10000.0) < 3.0 * sigma);

    const PointSample again = sample_surface(m, 40000, 7);
    CHECK(again.positions == s.positions);
    CHECK(again.faces == s.faces);
    CHECK(sample_surface(m, 40000, 8).positions != s.positions);
}

TEST_CASE("sample_surface: errors and zero-area faces")
{
    CHECK_THROWS_AS(sample_surface(TriangleMesh {}, 10, 1), Error);
    TriangleMesh m = two_triangles();
    m.positions.conservativeResize(7, 3);
    m.positions.row(6) << 0.5, 0.5, 0.5;
    m.triangles.conservativeResize(3, 3);
    m.triangles.row(2) << 6, 6, 6;
    const PointSample s = sample_surface(m, 5000, 2);
    CHECK(std::count(s.faces.begin(), s.faces.end(), Index(2)) == 0);
    try
    {
        sample_surface(TriangleMesh {}, 10, 1);
    }
    catch (const Error & e)
    {
        CHECK(e.code() == ErrorCode::empty_surface);
    }
}

TEST_CASE("sample_surface_vjp: finite differences with fixed provenance")
{
    const TriangleMesh ico = make_icosahedron_mesh();
    const PointSample s    = sample_surface(ico, 200, 3);
    const MatX3 dp = random_points(s.size(), 1);
    const MatX3 dn = random_points(s.size(), 2);
    const MatX3 grad = sample_surface_vjp(ico, s, dp, dn);
    const double h = 1e-6;
    for (Index v = 0; v < ico.num_vertices(); ++v)
    {
        for (int a = 0; a < 3; ++a)
        {
            TriangleMesh plus = ico, minus = ico;
            plus.positions(v, a) += h;
            minus.positions(v, a) -= h;
            const PointSample sp = resample(plus, s), sm = resample(minus, s);
            const double fd = (dot_all(dp, sp.positions) + dot_all(dn, sp.normals) - dot_all(dp, sm.positions) - dot_all(dn, sm.normals)) / (2.0 * h);
            CHECK(relative_error(fd, grad(v, a), 1.0) < 1e-7);
        }
    }
}

TEST_CASE("chamfer: examples")
{
    const MatX3 p = random_points(50, 3);
    CHECK(chamfer(p, p, ChamferOrder::l1).value == 0.0);
    CHECK(chamfer(p, p, ChamferOrder::l2).value == 0.0);

    MatX3 a(1, 3), b(1, 3);
    a << 0, 0, 0;
    b << 1, 0, 0;
    CHECK(chamfer(a, b, ChamferOrder::l1).value == 2.0);
    CHECK(chamfer(a, b, ChamferOrder::l2).value == 2.0);

    for (std::uint32_t seed = 0; seed < 20; ++seed)
    {
        const MatX3 x = random_points(5, 100 + seed), y = random_points(5, 200 + seed);
        CHECK(chamfer(x, y, ChamferOrder::l1).value == doctest::Approx(brute_chamfer(x, y, false)).epsilon(1e-15));
        CHECK(chamfer(x, y, ChamferOrder::l2).value == doctest::Approx(brute_chamfer(x, y, true)).epsilon(1e-15));
    }
}

TEST_CASE("chamfer: symmetry, indiscernibles and large sets")
{
    const MatX3 x = random_points(5000, 5), y = random_points(4500, 6);
    for (ChamferOrder order : {ChamferOrder::l1, ChamferOrder::l2})
    {
        const double xy = chamfer(x, y, order).value;
        CHECK(xy == doctest::Approx(chamfer(y, x, order).value).epsilon(1e-14));
        CHECK(xy == doctest::Approx(brute_chamfer(x, y, order == ChamferOrder::l2)).epsilon(1e-12));
    }
    // Same set in a different order (with a duplicate) is still at distance 0.
    MatX3 shuffled = x.colwise().reverse();
    MatX3 dup(x.rows() + 1, 3);
    dup << shuffled, x.row(0);
    CHECK(chamfer(x, dup, ChamferOrder::l1).value == 0.0);
    MatX3 moved = x;
    moved(17, 1) += 1e-9;
    CHECK(chamfer(x, moved, ChamferOrder::l1).value > 0.0);
}

TEST_CASE("chamfer: gradients")
{
    const MatX3 x = random_points(30, 11), y = random_points(25, 12);
    for (ChamferOrder order : {ChamferOrder::l1, ChamferOrder::l2})
    {
        const ChamferResult r = chamfer(x, y, order);
        const double h = 1e-7;
        for (Index i = 0; i < x.rows(); ++i)
        {
            for (int a = 0; a < 3; ++a)
            {
                MatX3 xp = x, xm = x;
                xp(i, a) += h;
                xm(i, a) -= h;
                const double fd = (chamfer(xp, y, order).value - chamfer(xm, y, order).value) / (2.0 * h);
                CHECK(relative_error(fd, r.d_p(i, a), 1.0) < 1e-6);
            }
        }
        for (Index j = 0; j < y.rows(); ++j)
        {
            for (int a = 0; a < 3; ++a)
            {
                MatX3 yp = y, ym = y;
                yp(j, a) += h;
                ym(j, a) -= h;
                const double fd = (chamfer(x, yp, order).value - chamfer(x, ym, order).value) / (2.0 * h);
                CHECK(relative_error(fd, r.d_q(j, a), 1.0) < 1e-6);
            }
        }
    }
}

TEST_CASE("normal_consistency: examples")
{
    PointSample p;
    p.positions.resize(2, 3);
    p.positions << 0, 0, 0, 1, 0, 0;
    p.normals.resize(2, 3);
    p.normals << 0, 0, 1, 0, 1, 0;
    CHECK(normal_consistency(p, p).value == 0.0);

    PointSample opposite = p;
    opposite.normals *= -1.0;
    CHECK(normal_consistency(p, opposite).value == 0.0);

    PointSample ortho = p;
    ortho.normals << 1, 0, 0, 0, 0, 1;
    CHECK(normal_consistency(p, ortho).value == 1.0);

    // Gradient: d/dn_p of mean(1 - |n_p.n_q|).
    const MatX3 pn = random_points(10, 4), qn = random_points(10, 5);
    std::vector<Index> corr(10);
    for (int i = 0; i < 10; ++i)
        corr[i] = (i * 3) % 10;
    const auto r = normal_consistency(pn, qn, corr);
    const double h = 1e-7;
    for (Index i = 0; i < 10; ++i)
        for (int a = 0; a < 3; ++a)
        {
            MatX3 pp = pn, pm = pn;
            pp(i, a) += h;
            pm(i, a) -= h;
            const double fd = (normal_consistency(pp, qn, corr).value - normal_consistency(pm, qn, corr).value) / (2.0 * h);
            CHECK(relative_error(fd, r.d_normals(i, a), 1.0) < 1e-7);
        }
}

TEST_CASE("sdf_regularization: examples and gradients")
{
    TetGrid grid = build_grid(3);
    const auto sphere = AnalyticSdf::sphere(Vec3::Constant(0.5), 0.3);
    const SdfQuery target = [&](const Vec3 & p, Vec3 * g) {
        if (g)
            *g = (p - sphere.center).normalized();
        return eval_analytic<double>(sphere, p);
    };
    for (Index v = 0; v < grid.num_vertices(); ++v)
        grid.sdf[v] = target(grid.position(v), nullptr);
    CHECK(sdf_regularization(grid, target).value == 0.0);

    grid.sdf.array() += 0.125;
    const auto r = sdf_regularization(grid, target);
    CHECK(r.value == doctest::Approx(0.125 * 0.125).epsilon(1e-14));

    std::mt19937 gen(3);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (Index v = 0; v < grid.num_vertices(); ++v)
        grid.sdf[v] += u(gen);
    MatX3 d(grid.num_vertices(), 3);
    for (Index v = 0; v < d.rows(); ++v)
        for (int a = 0; a < 3; ++a)
            d(v, a) = u(gen) * grid.clamp_radius * 5.0;
    set_deformation(grid, d);
    const auto g = sdf_regularization(grid, target);
    CHECK(g.d_sdf.isApprox(2.0 * (grid.sdf - VecX::NullaryExpr(grid.num_vertices(), [&](Index v) { return target(grid.position(v), nullptr); })) / double(grid.num_vertices())));
    const double h = 1e-6;
    for (Index v = 0; v < grid.num_vertices(); v += 5)
    {
        TetGrid plus = grid, minus = grid;
        plus.sdf[v] += h;
        minus.sdf[v] -= h;
        const double fd = (sdf_regularization(plus, target).value - sdf_regularization(minus, target).value) / (2.0 * h);
        CHECK(std::abs(fd - g.d_sdf[v]) < 1e-8);
        for (int a = 0; a < 3; ++a)
        {
            TetGrid pp = grid, pm = grid;
            pp.deformations(v, a) += h;
            pm.deformations(v, a) -= h;
            const double fdx = (sdf_regularization(pp, target).value - sdf_regularization(pm, target).value) / (2.0 * h);
            CHECK(std::abs(fdx - g.d_positions(v, a)) < 1e-8);
        }
    }
}

TEST_CASE("deformation_regularization: examples and gradients")
{
    CHECK(deformation_regularization(MatX3::Zero(10, 3)).value == 0.0);
    MatX3 one(1, 3);
    one << 3, 4, 0;
    CHECK(deformation_regularization(one).value == doctest::Approx(5.0).epsilon(1e-12));

    const MatX3 d = random_points(20, 9) * 0.01;
    const auto r  = deformation_regularization(d);
    const double h = 1e-8;
    for (Index v = 0; v < d.rows(); ++v)
        for (int a = 0; a < 3; ++a)
        {
            MatX3 dp = d, dm = d;
            dp(v, a) += h;
            dm(v, a) -= h;
            const double fd = (deformation_regularization(dp).value - deformation_regularization(dm).value) / (2.0 * h);
            CHECK(relative_error(fd, r.d_deformations(v, a), 1.0) < 1e-6);
        }
}

TEST_CASE("quadratic terms descend under a small gradient step")
{
    TetGrid grid = build_grid(3);
    std::mt19937 gen(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (Index v = 0; v < grid.num_vertices(); ++v)
        grid.sdf[v] = u(gen);
    const VecX target = VecX::Zero(grid.num_vertices());
    const auto before = sdf_regularization(grid, target);
    grid.sdf -= 0.1 * before.d_sdf;
    CHECK(sdf_regularization(grid, target).value < before.value);

    MatX3 d = random_points(50, 2);
    const auto dr = deformation_regularization(d);
    d -= 0.1 * dr.d_deformations;
    CHECK(deformation_regularization(d).value < dr.value);
}

TEST_CASE("lsgan_terms: plug-in cases")
{
    CHECK(lsgan_terms(1.0, 0.0).discriminator == 0.0);
    CHECK(lsgan_terms(1.0, 0.0).generator == 0.5);
    CHECK(lsgan_terms(0.3, 1.0).generator == 0.0);
    CHECK(lsgan_terms(0.0, 1.0).discriminator == 1.0);
    CHECK_THROWS_AS(lsgan_terms(std::nan(""), 0.0), Error);
}

TEST_CASE("total_loss: examples")
{
    const LossTerms terms {1.0, 2.0, 3.0, 4.0, 5.0};
    CHECK(total_loss(terms, LossWeights {0, 0, 0, 0, 0}).total == 0.0);
    CHECK(total_loss(terms, LossWeights {1, 1, 1, 1, 1}).total == 15.0);
    const LossWeights w;
    CHECK(w.cd == 1.0);
    CHECK(w.normal == 0.1);
    CHECK(w.gan == 0.0);
    CHECK(w.sdf == 0.2);
    CHECK(w.deform == 0.05);
    const LossReport r = total_loss(terms, w);
    const double dot = w.cd * 1.0 + w.normal * 2.0 + w.gan * 3.0 + w.sdf * 4.0 + w.deform * 5.0;
    CHECK(std::abs(r.total - dot) < 1e-12);
    CHECK_THROWS_AS(total_loss(terms, LossWeights {-1, 0, 0, 0, 0}), Error);
}
