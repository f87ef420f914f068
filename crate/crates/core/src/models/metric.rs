//! Dissipation metrics frozen at a reference state.
//!
//! Every dissipation in this crate is a quadratic form `Φ(x) = ½ xᵀ H x` in
//! the flux (or, for nonconserved models, in the increment `u - u^k`). A
//! [`Metric`] stores what is needed to evaluate `Φ`, apply `H` and extract
//! its diagonal without re-deriving face mobilities at every call.

#[derive(Debug, Clone)]
pub(crate) enum Metric {
    /// `Φ = ½ Σ_k w_k x_k²`.
    Diagonal(Vec<f64>),
    /// Maxwell–Stefan relative-velocity friction.
    Friction(FrictionMetric),
}

#[derive(Debug, Clone)]
pub(crate) struct FrictionMetric {
    pub species: usize,
    /// Faces per species (`dim * cells`).
    pub faces: usize,
    pub volume: f64,
    /// Face-averaged reference fractions, species-major.
    pub mobility: Vec<f64>,
    /// Row-major `s x s` friction coefficients.
    pub friction: Vec<f64>,
}

impl Metric {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Metric::Diagonal(w) => 0.5 * w.iter().zip(x).map(|(w, x)| w * x * x).sum::<f64>(),
            Metric::Friction(f) => f.value(x),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Metric::Diagonal(w) => w.iter().zip(x).map(|(w, x)| w * x).collect(),
            Metric::Friction(f) => f.apply(x),
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        match self {
            Metric::Diagonal(w) => w.clone(),
            Metric::Friction(f) => f.diagonal(),
        }
    }
}

impl FrictionMetric {
    fn b(&self, i: usize, j: usize) -> f64 {
        self.friction[i * self.species + j]
    }

    fn value(&self, m: &[f64]) -> f64 {
        let (s, nf) = (self.species, self.faces);
        let mut acc = 0.0;
        for f in 0..nf {
            for i in 0..s {
                let ui = self.mobility[i * nf + f];
                let wi = m[i * nf + f] / ui;
                for j in 0..s {
                    if i == j {
                        continue;
                    }
                    let uj = self.mobility[j * nf + f];
                    let wj = m[j * nf + f] / uj;
                    acc += self.b(i, j) * ui * uj * (wi - wj) * (wi - wj);
                }
            }
        }
        0.25 * self.volume * acc
    }

    fn apply(&self, m: &[f64]) -> Vec<f64> {
        let (s, nf) = (self.species, self.faces);
        let mut out = vec![0.0; m.len()];
        for f in 0..nf {
            for i in 0..s {
                let ui = self.mobility[i * nf + f];
                let wi = m[i * nf + f] / ui;
                let mut acc = 0.0;
                for j in 0..s {
                    if i == j {
                        continue;
                    }
                    let uj = self.mobility[j * nf + f];
                    acc += self.b(i, j) * uj * (wi - m[j * nf + f] / uj);
                }
                out[i * nf + f] = self.volume * acc;
            }
        }
        out
    }

    fn diagonal(&self) -> Vec<f64> {
        let (s, nf) = (self.species, self.faces);
        let mut out = vec![0.0; s * nf];
        for f in 0..nf {
            for i in 0..s {
                let ui = self.mobility[i * nf + f];
                let mut acc = 0.0;
                for j in 0..s {
                    if i != j {
                        acc += self.b(i, j) * self.mobility[j * nf + f] / ui;
                    }
                }
                out[i * nf + f] = self.volume * acc;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FrictionMetric {
        FrictionMetric {
            species: 3,
            faces: 2,
            volume: 0.5,
            mobility: vec![0.2, 0.3, 0.5, 0.1, 0.3, 0.6],
            friction: vec![0.0, 1.0, 2.0, 1.0, 0.0, 0.5, 2.0, 0.5, 0.0],
        }
    }

    #[test]
    fn friction_value_is_half_quadratic_form() {
        let f = sample();
        let m = [0.3, -0.2, 1.1, 0.4, -0.7, 0.05];
        let hm = f.apply(&m);
        let q: f64 = 0.5 * m.iter().zip(&hm).map(|(a, b)| a * b).sum::<f64>();
        assert!((f.value(&m) - q).abs() < 1e-14);
    }

    #[test]
    fn friction_diagonal_matches_unit_vectors() {
        let f = sample();
        let d = f.diagonal();
        for k in 0..6 {
            let mut e = vec![0.0; 6];
            e[k] = 1.0;
            assert!((f.apply(&e)[k] - d[k]).abs() < 1e-14);
        }
    }
}
