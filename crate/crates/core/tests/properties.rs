use proptest::prelude::*;

use vexlap::solvers::pk_energy;
use vexlap::verify::{check_comparison, harnack_constant, random_smooth_start};
use vexlap::{
    continue_k, parse, riemannian_distance, riemannian_gradient, solve_linear_weighted, solve_pk, sup_extremal,
    BoundarySpec, DomainSpec, FrameField, Grid2D, Node, Problem, ProblemSpec, ScalarField, SolverConfig,
};

fn problem(n: usize, p: &str, f: &str) -> Problem {
    let spec = ProblemSpec::new(DomainSpec::unit_square(n), parse(p).unwrap(), BoundarySpec::Expr(parse(f).unwrap()));
    Problem::new(spec).unwrap()
}

fn trig_data(a: [f64; 4]) -> String {
    format!(
        "{} * sin(2*x + y) + {} * cos(3*y) + {} * x*y + {}",
        a[0], a[1], a[2], a[3]
    )
}

fn coeffs() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-1.0f64..1.0)
}

fn bump_frame(g: &Grid2D, s: f64, t: f64) -> FrameField {
    FrameField::from_fn(g, 1e-10, |x, y| [[1.0 + s * x * y, t * x], [0.0, 1.0 + y * y / 2.0]]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // Green's function symmetry G(a, b) = G(b, a) follows from a symmetric
    // stiffness matrix.
    #[test]
    fn weighted_operator_is_symmetric(
        s in 0.0f64..0.5,
        t in -0.5f64..0.5,
        wa in prop::array::uniform3(0.2f64..3.0),
        a in (1usize..8, 1usize..8),
        b in (1usize..8, 1usize..8),
    ) {
        let g = Grid2D::unit_square(9).unwrap();
        let frame = bump_frame(&g, s, t);
        let w = ScalarField::from_fn(&g, |x, y| wa[0] + wa[1] * x + wa[2] * y * y);
        let zero = ScalarField::constant(&g, 0.0);
        let (ia, ib) = (g.index(a.0, a.1), g.index(b.0, b.1));
        let delta = |k: usize| ScalarField::from_fn(&g, |x, y| if g.nearest(x, y) == g.node(k) { 1.0 } else { 0.0 });
        let cfg = SolverConfig::default();
        let ga = solve_linear_weighted(&w, &delta(ia), &zero, &g, &frame, &cfg).unwrap();
        let gb = solve_linear_weighted(&w, &delta(ib), &zero, &g, &frame, &cfg).unwrap();
        let scale = ga[ia].abs().max(gb[ib].abs());
        prop_assert!((ga[ib] - gb[ia]).abs() <= 1e-10 * scale, "{} vs {}", ga[ib], gb[ia]);
    }

    #[test]
    fn discrete_maximum_principle(a in coeffs()) {
        let pr = problem(17, "2", &trig_data(a));
        let (u, _) = solve_pk(&pr, 1.0, None).unwrap();
        let (lo, hi) = (pr.boundary_min(), pr.boundary_max());
        for k in 0..pr.grid.len() {
            prop_assert!(u[k] >= lo - 1e-9 && u[k] <= hi + 1e-9);
        }
    }

    #[test]
    fn raising_the_data_never_lowers_the_solution(a in coeffs(), k in prop::sample::select(vec![1.0, 2.0, 4.0])) {
        let pr = problem(17, "2 + x^2/4", &trig_data(a));
        let (u, _) = solve_pk(&pr, k, None).unwrap();
        let raised = pr.with_boundary_values(|_, v| v + 0.1);
        let (v, _) = solve_pk(&raised, k, None).unwrap();
        let drop = (0..pr.grid.len()).map(|i| u[i] - v[i]).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(drop <= 1e-6, "drop {drop}");
    }

    #[test]
    fn solution_minimises_the_discrete_energy(a in coeffs(), seed in 0u64..1000, k in prop::sample::select(vec![1.0, 2.0, 4.0])) {
        let pr = problem(17, "2 + x/2", &trig_data(a));
        let start = random_smooth_start(&pr.f, &pr.grid, 0.3, seed);
        let (u, _) = solve_pk(&pr, k, Some(&start)).unwrap();
        let e = pk_energy(&pr, k, &u);
        prop_assert!(e <= pk_energy(&pr, k, &start) + 1e-12 * e.abs());
        for s in 0..10 {
            let v = random_smooth_start(&u, &pr.grid, 0.01, seed * 10 + s);
            prop_assert!(e <= pk_energy(&pr, k, &v) + 1e-12 * e.abs());
        }
    }

    #[test]
    fn distance_triangle_inequality(s in 0.0f64..0.5, t in -0.5f64..0.5, nodes in prop::collection::vec((0usize..9, 0usize..9), 3)) {
        let g = Grid2D::unit_square(9).unwrap();
        let frame = bump_frame(&g, s, t);
        let n: Vec<Node> = nodes.iter().map(|&(i, j)| Node::new(i, j)).collect();
        let d0 = riemannian_distance(&frame, &g, n[0]).unwrap();
        let d1 = riemannian_distance(&frame, &g, n[1]).unwrap();
        let (i1, i2) = (g.index(n[1].i, n[1].j), g.index(n[2].i, n[2].j));
        prop_assert_eq!(d0[g.index(n[0].i, n[0].j)], 0.0);
        prop_assert!(d0[i2] <= d0[i1] + d1[i2] + 1e-12);
    }

    #[test]
    fn frame_scaling_is_exact(c in prop::sample::select(vec![0.5, 2.0, 4.0, 0.25]), s in 0.0f64..0.5) {
        let g = Grid2D::unit_square(9).unwrap();
        let frame = bump_frame(&g, s, 0.1);
        let scaled = frame.scaled(c).unwrap();
        let u = ScalarField::from_fn(&g, |x, y| x.sin() * y.cos());
        let (du, dcu) = (riemannian_gradient(&u, &frame, &g), riemannian_gradient(&u, &scaled, &g));
        for (a, b) in du.values().iter().zip(dcu.values()) {
            prop_assert_eq!([c * a[0], c * a[1]], *b);
        }
        let d = riemannian_distance(&frame, &g, Node::new(2, 3)).unwrap();
        let dc = riemannian_distance(&scaled, &g, Node::new(2, 3)).unwrap();
        for k in 0..g.len() {
            prop_assert_eq!(dc[k], d[k] / c);
        }
    }

    #[test]
    fn comparison_is_reflexive(a in coeffs()) {
        let g = Grid2D::unit_square(9).unwrap();
        let u = ScalarField::sample(&parse(&trig_data(a)).unwrap(), &g).unwrap();
        prop_assert!(check_comparison(&u, &u, &g, 0.0).ok());
    }

    #[test]
    fn harnack_constant_matches_scaled_fields(c in 0.1f64..10.0, r in 0.02f64..0.15, ci in 6usize..12, cj in 6usize..12) {
        let g = Grid2D::unit_square(17).unwrap();
        let center = Node::new(ci, cj);
        let dist = riemannian_distance(&FrameField::identity(&g), &g, center).unwrap();
        let cu = ScalarField::from_fn(&g, |x, y| c * (1.0 + x + y * y));
        let inside: Vec<f64> = (0..g.len()).filter(|&k| dist[k] <= r).map(|k| cu[k]).collect();
        let sup = inside.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let inf = inside.iter().cloned().fold(f64::INFINITY, f64::min);
        let got = harnack_constant(&cu, &g, center, r, &dist).unwrap();
        prop_assert_eq!(got, sup / (inf + r));
    }
}

#[test]
fn limit_improves_the_extremal_functional() {
    let spec = ProblemSpec::new(
        DomainSpec::rect(1.0, 2.0, 1.0, 2.0, 33),
        parse("2").unwrap(),
        BoundarySpec::Expr(parse("x^(4/3) - y^(4/3)").unwrap()),
    );
    let pr = Problem::new(spec).unwrap();
    let first = pr.spec.solver.k_schedule[0];
    let (u1, _) = solve_pk(&pr, first, None).unwrap();
    let (u, _) = continue_k(&pr, None).unwrap();
    let (e1, e) = (sup_extremal(&u1, &pr.frame, &pr.grid, &pr.p), sup_extremal(&u, &pr.frame, &pr.grid, &pr.p));
    assert!(e <= e1 + 0.05, "{e} vs {e1}");
}

#[test]
fn harnack_constant_of_constant_field_shrinks_with_r() {
    let g = Grid2D::unit_square(17).unwrap();
    let center = Node::new(8, 8);
    let dist = riemannian_distance(&FrameField::identity(&g), &g, center).unwrap();
    let u = ScalarField::constant(&g, 2.0);
    let mut last = f64::INFINITY;
    for r in [0.05, 0.1, 0.2] {
        let h = harnack_constant(&u, &g, center, r, &dist).unwrap();
        assert_eq!(h, 2.0 / (2.0 + r));
        assert!(h < last);
        last = h;
    }
}
