use nwot::{DiscreteDistribution, Exponent};

/// Dense two-phase tableau simplex with Bland's rule for
/// `min cᵀv  s.t.  A v = b, v ≥ 0` with `b ≥ 0`.
pub fn dense_lp(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> f64 {
    let (rows, cols) = (a.len(), c.len());
    let width = cols + rows + 1;
    let mut t: Vec<Vec<f64>> = (0..rows)
        .map(|r| {
            let mut row = a[r].clone();
            row.extend((0..rows).map(|q| if q == r { 1.0 } else { 0.0 }));
            row.push(b[r]);
            row
        })
        .collect();
    let mut basis: Vec<usize> = (cols..cols + rows).collect();

    fn pivot(t: &mut [Vec<f64>], obj: &mut [f64], r: usize, e: usize) {
        let p = t[r][e];
        t[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = t[r].clone();
        for (q, row) in t.iter_mut().enumerate() {
            if q != r && row[e] != 0.0 {
                let f = row[e];
                row.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
        let f = obj[e];
        obj.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
    }

    fn run(t: &mut [Vec<f64>], obj: &mut [f64], basis: &mut [usize], allowed: usize) {
        loop {
            let Some(e) = (0..allowed).find(|&j| obj[j] < -1e-11) else { return };
            let mut best: Option<(f64, usize)> = None;
            for (r, row) in t.iter().enumerate() {
                if row[e] > 1e-11 {
                    let ratio = row[row.len() - 1] / row[e];
                    let better = match best {
                        None => true,
                        Some((br, bq)) => ratio < br - 1e-13 || (ratio <= br + 1e-13 && basis[r] < basis[bq]),
                    };
                    if better {
                        best = Some((ratio, r));
                    }
                }
            }
            let (_, r) = best.expect("bounded");
            pivot(t, obj, r, e);
            basis[r] = e;
        }
    }

    // phase 1: minimize the sum of artificials
    let mut obj = vec![0.0; width];
    for row in &t {
        for j in 0..cols {
            obj[j] -= row[j];
        }
        obj[width - 1] -= row[width - 1];
    }
    run(&mut t, &mut obj, &mut basis, cols);
    assert!(obj[width - 1].abs() < 1e-9, "infeasible");
    // drive remaining artificials out of the basis
    for r in 0..rows {
        if basis[r] >= cols {
            if let Some(e) = (0..cols).find(|&j| t[r][j].abs() > 1e-9) {
                let mut dummy = vec![0.0; width];
                pivot(&mut t, &mut dummy, r, e);
                basis[r] = e;
            }
        }
    }
    // phase 2
    let mut obj = vec![0.0; width];
    obj[..cols].copy_from_slice(c);
    for (r, &bv) in basis.iter().enumerate() {
        if bv < cols && obj[bv] != 0.0 {
            let f = obj[bv];
            obj.iter_mut().zip(&t[r]).for_each(|(v, tv)| *v -= f * tv);
        }
    }
    run(&mut t, &mut obj, &mut basis, cols);
    -obj[width - 1]
}

/// `min over π, T` of the transport cost from `data` to `Σ π_g comp_g`.
pub fn mixture_lp(data: &DiscreteDistribution, comps: &[DiscreteDistribution], p: Exponent) -> f64 {
    let support: Vec<(usize, &[f64], f64)> = comps
        .iter()
        .enumerate()
        .flat_map(|(g, c)| c.points().zip(c.weights()).map(move |(s, &w)| (g, s, w)))
        .collect();
    let (n, m, k) = (data.len(), support.len(), comps.len());
    let cols = n * m + k;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        let mut row = vec![0.0; cols];
        (0..m).for_each(|j| row[i * m + j] = 1.0);
        a.push(row);
        b.push(data.weights()[i]);
    }
    for (j, &(g, _, w)) in support.iter().enumerate() {
        let mut row = vec![0.0; cols];
        (0..n).for_each(|i| row[i * m + j] = 1.0);
        row[n * m + g] = -w;
        a.push(row);
        b.push(0.0);
    }
    let mut row = vec![0.0; cols];
    (0..k).for_each(|g| row[n * m + g] = 1.0);
    a.push(row);
    b.push(1.0);
    let mut c = vec![0.0; cols];
    for i in 0..n {
        for (j, &(_, s, _)) in support.iter().enumerate() {
            c[i * m + j] = p.cost(data.point(i), s);
        }
    }
    dense_lp(&a, &b, &c)
}
