//! Small dense complex-matrix helpers shared by the kernels.

use ndarray::Array2;
use num_complex::Complex;

use crate::scalar::{czero, Real};

pub type CMatrix<T> = Array2<Complex<T>>;

pub fn identity<T: Real>(n: usize) -> CMatrix<T> {
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            Complex::new(T::one(), T::zero())
        } else {
            czero()
        }
    })
}

pub fn adjoint<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    m.t().mapv(|z| z.conj())
}

pub fn kron<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| a[[i / br, j / bc]] * b[[i % br, j % bc]])
}

pub fn trace<T: Real>(m: &CMatrix<T>) -> Complex<T> {
    m.diag().iter().fold(czero(), |acc, &z| acc + z)
}

/// `tr(A B)` without forming the product.
pub fn trace_product<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Complex<T> {
    let mut acc = czero();
    for ((i, j), &x) in a.indexed_iter() {
        acc = acc + x * b[[j, i]];
    }
    acc
}

/// Solves `A X = B` by LU decomposition with partial pivoting. Returns `None`
/// if a pivot vanishes or the result is not finite.
pub fn solve<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Option<CMatrix<T>> {
    let n = a.nrows();
    let mut lu = a.clone();
    let mut x = b.clone();
    let cols = x.ncols();
    let scale = lu.iter().fold(T::zero(), |m, z| m.max(z.norm()));
    let tiny = T::epsilon() * scale.max(T::one()) * T::of(n as f64);
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, lu[[i, k]].norm()))
            .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pivot > tiny) {
            return None;
        }
        if p != k {
            for j in 0..n {
                lu.swap([k, j], [p, j]);
            }
            for j in 0..cols {
                x.swap([k, j], [p, j]);
            }
        }
        let d = lu[[k, k]];
        for i in k + 1..n {
            let f = lu[[i, k]] / d;
            if f == czero() {
                continue;
            }
            for j in k..n {
                let v = lu[[k, j]];
                lu[[i, j]] = lu[[i, j]] - f * v;
            }
            for j in 0..cols {
                let v = x[[k, j]];
                x[[i, j]] = x[[i, j]] - f * v;
            }
        }
    }
    for k in (0..n).rev() {
        for j in 0..cols {
            let mut s = x[[k, j]];
            for i in k + 1..n {
                s = s - lu[[k, i]] * x[[i, j]];
            }
            x[[k, j]] = s / lu[[k, k]];
        }
    }
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(x)
}

/// Eigenvalues of a small real symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues<T: Real>(m: &Array2<T>) -> Vec<T> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        if off <= T::epsilon() * T::epsilon() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[[i, i]]).collect()
}

/// Largest singular value of a real matrix.
pub fn max_singular_value<T: Real>(m: &Array2<T>) -> T {
    let gram = m.t().dot(m);
    symmetric_eigenvalues(&gram)
        .into_iter()
        .fold(T::zero(), |acc, v| acc.max(v))
        .sqrt()
}
