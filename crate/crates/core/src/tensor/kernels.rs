//! Row-major matrix kernels. Loop orders keep the innermost loop contiguous.

/// out[m,n] = a[m,k] · b[k,n]
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// out[m,k] = g[m,n] · w[k,n]ᵀ
pub fn matmul_a_bt(g: &[f64], w: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    debug_assert_eq!(g.len(), m * n);
    debug_assert_eq!(w.len(), k * n);
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let wrow = &w[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(wrow).map(|(a, b)| a * b).sum();
        }
    }
    out
}

/// out[k,n] = x[m,k]ᵀ · g[m,n]
pub fn matmul_at_b(x: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), m * k);
    debug_assert_eq!(g.len(), m * n);
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let xip = x[i * k + p];
            if xip == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += xip * gv;
            }
        }
    }
    out
}
