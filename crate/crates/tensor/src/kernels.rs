//! Plain-loop matrix kernels over row-major slices. All kernels accumulate
//! into `out`.

/// out[n,m] += a[n,k] * b[k,m]
pub(crate) fn gemm(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let a_row = &a[i * k..(i + 1) * k];
        let o_row = &mut out[i * m..(i + 1) * m];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * m..(p + 1) * m];
            for (o, &bv) in o_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// out[n,m] += a[n,k] * b[m,k]^T
pub(crate) fn gemm_bt(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let b_row = &b[j * k..(j + 1) * k];
            let dot: f64 = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
            out[i * m + j] += dot;
        }
    }
}

/// out[k,m] += a[n,k]^T * b[n,m]
pub(crate) fn gemm_at(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * m..(i + 1) * m];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let o_row = &mut out[p * m..(p + 1) * m];
            for (o, &bv) in o_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_variants_agree() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, -1.0, 2.0, 0.5, 1.0]; // 3x2
        let mut ab = [0.0; 4];
        gemm(&a, &b, &mut ab, 2, 3, 2);
        assert_eq!(ab, [1.0 - 2.0 + 1.5, 4.0 + 3.0, 4.0 - 5.0 + 3.0, 10.0 + 6.0]);

        // b^T laid out as 2x3
        let bt = [1.0, -1.0, 0.5, 0.0, 2.0, 1.0];
        let mut ab2 = [0.0; 4];
        gemm_bt(&a, &bt, &mut ab2, 2, 3, 2);
        assert_eq!(ab, ab2);

        // a^T as 3x2 so that (a^T)^T b^T... check a^T * c for c 2x2
        let c = [1.0, 1.0, 1.0, 1.0];
        let mut atc = [0.0; 6];
        gemm_at(&a, &c, &mut atc, 2, 3, 2);
        assert_eq!(atc, [5.0, 5.0, 7.0, 7.0, 9.0, 9.0]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
