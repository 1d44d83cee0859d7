#![allow(dead_code)]

/// Number of ways to write `q` as a sum of four squares (Jacobi).
pub fn r4(q: u64) -> u64 {
    if q == 0 {
        return 1;
    }
    8 * (1..=q).filter(|d| q.is_multiple_of(*d) && d % 4 != 0).sum::<u64>()
}

/// Solves `(t v′)^n = ∫_0^t n s^{n−1} ρ(s) ds`, `v(R²) = 0`, on `nodes` intervals of `[0, R²]`.
pub fn radial_oracle(n: usize, radius: f64, rho: impl Fn(f64) -> f64, nodes: usize) -> impl Fn(f64) -> f64 {
    let nf = n as f64;
    let top = radius * radius;
    let dt = top / nodes as f64;
    let t: Vec<f64> = (0..=nodes).map(|i| i as f64 * dt).collect();
    let integrand: Vec<f64> = t.iter().map(|&s| nf * s.powi(n as i32 - 1) * rho(s)).collect();
    let mut inner = vec![0.0; nodes + 1];
    for i in 1..=nodes {
        inner[i] = inner[i - 1] + 0.5 * dt * (integrand[i - 1] + integrand[i]);
    }
    let slope: Vec<f64> = (0..=nodes)
        .map(|i| if i == 0 { rho(0.0).powf(1.0 / nf) } else { inner[i].powf(1.0 / nf) / t[i] })
        .collect();
    let mut v = vec![0.0; nodes + 1];
    for i in (0..nodes).rev() {
        v[i] = v[i + 1] - 0.5 * dt * (slope[i] + slope[i + 1]);
    }
    move |x: f64| {
        let pos = (x / dt).clamp(0.0, nodes as f64 - 1e-9);
        let i = pos.floor() as usize;
        let w = pos - i as f64;
        v[i] * (1.0 - w) + v[i + 1] * w
    }
}
