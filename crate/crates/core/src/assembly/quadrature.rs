//! Quadrature on reference simplices in barycentric coordinates.
//!
//! Weights sum to the measure of the reference simplex (1/6 for the
//! tetrahedron, 1/2 for the triangle, 1 for the segment), so a rule is mapped
//! to a physical cell by multiplying weights with `n! * |cell|`.

#[derive(Debug, Clone)]
pub struct QuadratureRule<const N: usize> {
    points: Vec<[f64; N]>,
    weights: Vec<f64>,
    degree: usize,
}

pub type TetRule = QuadratureRule<4>;
pub type TriangleRule = QuadratureRule<3>;
pub type SegmentRule = QuadratureRule<2>;

impl<const N: usize> QuadratureRule<N> {
    pub fn points(&self) -> &[[f64; N]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Polynomial degree integrated exactly.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; N], f64)> + '_ {
        self.points.iter().zip(self.weights.iter().copied())
    }

    /// Measure of the reference simplex, `1 / (N-1)!`.
    pub fn reference_measure() -> f64 {
        1.0 / factorial(N - 1)
    }

    /// Grundmann-Moller rule of degree `2s + 1`. Contains negative weights
    /// for `s >= 1`.
    pub fn grundmann_moller(s: usize) -> Self {
        let n = N - 1;
        let d = 2 * s + 1;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for i in 0..=s {
            let denom = (d + n - 2 * i) as f64;
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let w = sign * 2f64.powi(-2 * s as i32) * denom.powi(d as i32)
                / (factorial(i) * factorial(d + n - i));
            for beta in compositions::<N>(s - i) {
                let mut p = [0.0; N];
                for (pk, bk) in p.iter_mut().zip(beta) {
                    *pk = (2 * bk + 1) as f64 / denom;
                }
                points.push(p);
                weights.push(w);
            }
        }
        QuadratureRule {
            points,
            weights,
            degree: d,
        }
    }

    fn centroid() -> Self {
        QuadratureRule {
            points: vec![[1.0 / N as f64; N]],
            weights: vec![Self::reference_measure()],
            degree: 1,
        }
    }
}

impl QuadratureRule<4> {
    /// Rule on the reference tetrahedron exact to at least `degree`.
    pub fn tet(degree: usize) -> Self {
        match degree {
            0 | 1 => Self::centroid(),
            2 => {
                let a = 0.585_410_196_624_968_5;
                let b = 0.138_196_601_125_010_5;
                QuadratureRule {
                    points: vec![[a, b, b, b], [b, a, b, b], [b, b, a, b], [b, b, b, a]],
                    weights: vec![1.0 / 24.0; 4],
                    degree: 2,
                }
            }
            d => Self::grundmann_moller(d / 2),
        }
    }
}

impl QuadratureRule<3> {
    /// Rule on the reference triangle exact to at least `degree`.
    pub fn triangle(degree: usize) -> Self {
        match degree {
            0 | 1 => Self::centroid(),
            d => Self::grundmann_moller(d / 2),
        }
    }

    /// Gauss-Legendre product rule mapped onto the triangle by collapsing
    /// one side of the square. Positive weights, exact to degree
    /// `2 npoints − 2`.
    pub fn collapsed_gauss(npoints: usize) -> Self {
        let (nodes, w) = gauss_legendre_nodes(npoints.max(1));
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (xa, wa) in nodes.iter().zip(&w) {
            let a = 0.5 * (1.0 + xa);
            for (xb, wb) in nodes.iter().zip(&w) {
                let b = 0.5 * (1.0 + xb);
                let (l1, l2) = (a, b * (1.0 - a));
                points.push([1.0 - l1 - l2, l1, l2]);
                weights.push(0.25 * wa * wb * (1.0 - a));
            }
        }
        QuadratureRule {
            points,
            weights,
            degree: 2 * npoints.max(1) - 2,
        }
    }
}

impl QuadratureRule<2> {
    /// Gauss-Legendre rule with `npoints` nodes on the unit segment.
    pub fn gauss_legendre(npoints: usize) -> Self {
        let (nodes, w) = gauss_legendre_nodes(npoints.max(1));
        let points = nodes
            .iter()
            .map(|&x| [0.5 * (1.0 - x), 0.5 * (1.0 + x)])
            .collect();
        QuadratureRule {
            points,
            weights: w.iter().map(|w| 0.5 * w).collect(),
            degree: 2 * npoints.max(1) - 1,
        }
    }

    /// Rule on the unit segment exact to at least `degree`.
    pub fn segment(degree: usize) -> Self {
        Self::gauss_legendre(degree / 2 + 1)
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// All `N`-tuples of non-negative integers summing to `total`, in
/// lexicographic order.
fn compositions<const N: usize>(total: usize) -> Vec<[usize; N]> {
    fn rec<const N: usize>(
        slot: usize,
        left: usize,
        cur: &mut [usize; N],
        out: &mut Vec<[usize; N]>,
    ) {
        if slot == N - 1 {
            cur[slot] = left;
            out.push(*cur);
            return;
        }
        for k in 0..=left {
            cur[slot] = k;
            rec(slot + 1, left - k, cur, out);
        }
    }
    let mut out = Vec::new();
    rec(0, total, &mut [0; N], &mut out);
    out
}

/// Nodes and weights on [-1, 1] by Newton iteration on Legendre polynomials.
fn gauss_legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // p1 = P_n(x), p0 = P_{n-1}(x)
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            let (p, pm1) = (p1, p0);
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact integral of prod(lambda_k^a_k) over the reference N-simplex.
    fn monomial_integral<const N: usize>(a: [usize; N]) -> f64 {
        let n = N - 1;
        let total: usize = a.iter().sum();
        a.iter().map(|&k| factorial(k)).product::<f64>() / factorial(total + n)
    }

    fn check_exact<const N: usize>(rule: &QuadratureRule<N>, max_degree: usize) {
        let sum: f64 = rule.weights().iter().sum();
        assert!((sum - QuadratureRule::<N>::reference_measure()).abs() < 1e-14);
        for deg in 0..=max_degree {
            for a in compositions::<N>(deg) {
                let q: f64 = rule
                    .iter()
                    .map(|(p, w)| w * p.iter().zip(a).map(|(x, k)| x.powi(k as i32)).product::<f64>())
                    .sum();
                let exact = monomial_integral(a);
                assert!(
                    (q - exact).abs() < 1e-14 * (1.0 + exact.abs()) * 10.0,
                    "degree {deg} monomial {a:?}: {q} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn tet_rules_exact() {
        for d in 1..=8 {
            let r = TetRule::tet(d);
            assert!(r.degree() >= d);
            check_exact(&r, d);
        }
    }

    #[test]
    fn triangle_rules_exact() {
        for d in 1..=9 {
            check_exact(&TriangleRule::triangle(d), d);
        }
    }

    #[test]
    fn collapsed_triangle_rules_exact() {
        for k in 1..=10 {
            let r = TriangleRule::collapsed_gauss(k);
            assert!(r.weights().iter().all(|w| *w > 0.0));
            check_exact(&r, 2 * k - 2);
        }
    }

    #[test]
    fn segment_rules_exact() {
        for k in 1..=8 {
            let r = SegmentRule::gauss_legendre(k);
            check_exact(&r, 2 * k - 1);
        }
        let r = SegmentRule::gauss_legendre(4);
        let x: Vec<f64> = r.points().iter().map(|p| 2.0 * p[1] - 1.0).collect();
        assert!((x[0] + 0.861_136_311_594_052_6).abs() < 1e-15);
        assert!((x[1] + 0.339_981_043_584_856_3).abs() < 1e-15);
    }

    #[test]
    fn p1_mass_on_reference_tet() {
        let r = TetRule::tet(2);
        let m = |i: usize, j: usize| r.iter().map(|(p, w)| w * p[i] * p[j]).sum::<f64>();
        assert!((m(0, 0) - 1.0 / 60.0).abs() < 1e-16);
        assert!((m(1, 3) - 1.0 / 120.0).abs() < 1e-16);
    }
}
