//! Differentiable tensor operations.
//!
//! Each op computes its output eagerly and, when recording is on, attaches a
//! backward closure that routes the output gradient to the parents. Matrix
//! products go through `matrixmultiply` (single-threaded, deterministic);
//! everything else is plain loops.

use std::rc::Rc;

use super::flops::flops_add;
use super::tensor::{Real, Tensor};

/// Whether each operand of a product is used transposed.
#[derive(Clone, Copy, PartialEq)]
enum Lay {
    NN,
    NT,
    TN,
}

/// C(+)= A·B with optional transposes expressed through strides; no copies.
fn gemm_into<T: Real>(
    out: &mut [T],
    a: &[T],
    b: &[T],
    m: usize,
    k: usize,
    n: usize,
    lay: Lay,
    accumulate: bool,
) {
    flops_add(2 * (m as u64) * (k as u64) * (n as u64));
    let (rsa, csa) = match lay {
        Lay::TN => (1, m as isize),
        _ => (k as isize, 1),
    };
    let (rsb, csb) = match lay {
        Lay::NT => (1, k as isize),
        _ => (n as isize, 1),
    };
    let beta = if accumulate { T::one() } else { T::zero() };
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl<T: Real> Tensor<T> {
    fn assert_2d(&self, what: &str) -> (usize, usize) {
        assert_eq!(self.rank(), 2, "{what} expects a 2-D tensor, got {:?}", self.shape());
        (self.dim(0), self.dim(1))
    }

    // ── matrix products ─────────────────────────────────────────────

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Tensor<T> {
        let (m, k) = self.assert_2d("matmul lhs");
        let (k2, n) = rhs.assert_2d("matmul rhs");
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![T::zero(); m * n];
        gemm_into(&mut out, self.data(), rhs.data(), m, k, n, Lay::NN, false);
        Tensor::from_op(vec![m, n], out, vec![self.clone(), rhs.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| gemm_into(ga, g, ps[1].data(), m, n, k, Lay::NT, true));
            ps[1].accumulate_grad(|gb| gemm_into(gb, ps[0].data(), g, k, m, n, Lay::TN, true));
        })
    }

    /// `[m,k] x [n,k]^T -> [m,n]`.
    pub fn matmul_nt(&self, rhs: &Tensor<T>) -> Tensor<T> {
        let (m, k) = self.assert_2d("matmul_nt lhs");
        let (n, k2) = rhs.assert_2d("matmul_nt rhs");
        assert_eq!(k, k2, "matmul_nt inner dims {k} vs {k2}");
        let mut out = vec![T::zero(); m * n];
        gemm_into(&mut out, self.data(), rhs.data(), m, k, n, Lay::NT, false);
        Tensor::from_op(vec![m, n], out, vec![self.clone(), rhs.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| gemm_into(ga, g, ps[1].data(), m, n, k, Lay::NN, true));
            ps[1].accumulate_grad(|gb| gemm_into(gb, g, ps[0].data(), n, m, k, Lay::TN, true));
        })
    }

    /// `[k,m]^T x [k,n] -> [m,n]`.
    pub fn matmul_tn(&self, rhs: &Tensor<T>) -> Tensor<T> {
        let (k, m) = self.assert_2d("matmul_tn lhs");
        let (k2, n) = rhs.assert_2d("matmul_tn rhs");
        assert_eq!(k, k2, "matmul_tn inner dims {k} vs {k2}");
        let mut out = vec![T::zero(); m * n];
        gemm_into(&mut out, self.data(), rhs.data(), m, k, n, Lay::TN, false);
        Tensor::from_op(vec![m, n], out, vec![self.clone(), rhs.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| gemm_into(ga, ps[1].data(), g, k, n, m, Lay::NT, true));
            ps[1].accumulate_grad(|gb| gemm_into(gb, ps[0].data(), g, k, m, n, Lay::NN, true));
        })
    }

    // ── binary elementwise ──────────────────────────────────────────

    pub fn add(&self, rhs: &Tensor<T>) -> Tensor<T> {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        let out = self.data().iter().zip(rhs.data()).map(|(&a, &b)| a + b).collect();
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone(), rhs.clone()], |g, ps| {
            ps[0].accumulate_grad(|ga| ga.iter_mut().zip(g).for_each(|(x, &d)| *x += d));
            ps[1].accumulate_grad(|gb| gb.iter_mut().zip(g).for_each(|(x, &d)| *x += d));
        })
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Tensor<T> {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        let out = self.data().iter().zip(rhs.data()).map(|(&a, &b)| a - b).collect();
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone(), rhs.clone()], |g, ps| {
            ps[0].accumulate_grad(|ga| ga.iter_mut().zip(g).for_each(|(x, &d)| *x += d));
            ps[1].accumulate_grad(|gb| gb.iter_mut().zip(g).for_each(|(x, &d)| *x -= d));
        })
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Tensor<T> {
        assert_eq!(self.shape(), rhs.shape(), "mul shape mismatch");
        let out = self.data().iter().zip(rhs.data()).map(|(&a, &b)| a * b).collect();
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone(), rhs.clone()], |g, ps| {
            ps[0].accumulate_grad(|ga| {
                for ((x, &d), &b) in ga.iter_mut().zip(g).zip(ps[1].data()) {
                    *x += d * b;
                }
            });
            ps[1].accumulate_grad(|gb| {
                for ((x, &d), &a) in gb.iter_mut().zip(g).zip(ps[0].data()) {
                    *x += d * a;
                }
            });
        })
    }

    pub fn div(&self, rhs: &Tensor<T>) -> Tensor<T> {
        assert_eq!(self.shape(), rhs.shape(), "div shape mismatch");
        let out = self.data().iter().zip(rhs.data()).map(|(&a, &b)| a / b).collect();
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone(), rhs.clone()], |g, ps| {
            ps[0].accumulate_grad(|ga| {
                for ((x, &d), &b) in ga.iter_mut().zip(g).zip(ps[1].data()) {
                    *x += d / b;
                }
            });
            ps[1].accumulate_grad(|gb| {
                for (i, (x, &d)) in gb.iter_mut().zip(g).enumerate() {
                    let a = ps[0].data()[i];
                    let b = ps[1].data()[i];
                    *x -= d * a / (b * b);
                }
            });
        })
    }

    // ── broadcasts ──────────────────────────────────────────────────

    /// `[n,d] + [d]` broadcast over rows.
    pub fn add_row(&self, bias: &Tensor<T>) -> Tensor<T> {
        let (n, d) = self.assert_2d("add_row lhs");
        assert_eq!(bias.numel(), d, "add_row bias length");
        let b = bias.data();
        let mut out = self.data().to_vec();
        for r in 0..n {
            for c in 0..d {
                out[r * d + c] += b[c];
            }
        }
        Tensor::from_op(vec![n, d], out, vec![self.clone(), bias.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| ga.iter_mut().zip(g).for_each(|(x, &v)| *x += v));
            ps[1].accumulate_grad(|gb| {
                for r in 0..n {
                    for c in 0..d {
                        gb[c] += g[r * d + c];
                    }
                }
            });
        })
    }

    /// `[n,d] * [d]` broadcast over rows (per-feature gain).
    pub fn mul_row(&self, gain: &Tensor<T>) -> Tensor<T> {
        let (n, d) = self.assert_2d("mul_row lhs");
        assert_eq!(gain.numel(), d, "mul_row gain length");
        let gn = gain.data();
        let mut out = self.data().to_vec();
        for r in 0..n {
            for c in 0..d {
                out[r * d + c] *= gn[c];
            }
        }
        Tensor::from_op(vec![n, d], out, vec![self.clone(), gain.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| {
                let gn = ps[1].data();
                for r in 0..n {
                    for c in 0..d {
                        ga[r * d + c] += g[r * d + c] * gn[c];
                    }
                }
            });
            ps[1].accumulate_grad(|gb| {
                let x = ps[0].data();
                for r in 0..n {
                    for c in 0..d {
                        gb[c] += g[r * d + c] * x[r * d + c];
                    }
                }
            });
        })
    }

    /// `[n,d] * [n]` broadcast over columns (per-row scalar).
    pub fn mul_col(&self, scale: &Tensor<T>) -> Tensor<T> {
        let (n, d) = self.assert_2d("mul_col lhs");
        assert_eq!(scale.numel(), n, "mul_col scale length");
        let s = scale.data();
        let mut out = self.data().to_vec();
        for r in 0..n {
            for c in 0..d {
                out[r * d + c] *= s[r];
            }
        }
        Tensor::from_op(vec![n, d], out, vec![self.clone(), scale.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| {
                let s = ps[1].data();
                for r in 0..n {
                    for c in 0..d {
                        ga[r * d + c] += g[r * d + c] * s[r];
                    }
                }
            });
            ps[1].accumulate_grad(|gs| {
                let x = ps[0].data();
                for r in 0..n {
                    let mut acc = T::zero();
                    for c in 0..d {
                        acc += g[r * d + c] * x[r * d + c];
                    }
                    gs[r] += acc;
                }
            });
        })
    }

    /// Multiply every element by a graph scalar (`[1]` tensor).
    pub fn scale_by(&self, s: &Tensor<T>) -> Tensor<T> {
        assert_eq!(s.numel(), 1, "scale_by expects a scalar tensor");
        let sv = s.data()[0];
        let out = self.data().iter().map(|&x| x * sv).collect();
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone(), s.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| {
                let sv = ps[1].data()[0];
                ga.iter_mut().zip(g).for_each(|(x, &d)| *x += d * sv);
            });
            ps[1].accumulate_grad(|gs| {
                let x = ps[0].data();
                let mut acc = T::zero();
                for (&d, &xv) in g.iter().zip(x) {
                    acc += d * xv;
                }
                gs[0] += acc;
            });
        })
    }

    // ── scalar-constant ops ─────────────────────────────────────────

    pub fn mul_scalar(&self, c: T) -> Tensor<T> {
        let out = self.data().iter().map(|&x| x * c).collect();
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| ga.iter_mut().zip(g).for_each(|(x, &d)| *x += d * c));
        })
    }

    pub fn add_scalar(&self, c: T) -> Tensor<T> {
        let out = self.data().iter().map(|&x| x + c).collect();
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], |g, ps| {
            ps[0].accumulate_grad(|ga| ga.iter_mut().zip(g).for_each(|(x, &d)| *x += d));
        })
    }

    pub fn neg(&self) -> Tensor<T> {
        self.mul_scalar(-T::one())
    }

    // ── unary elementwise ───────────────────────────────────────────

    fn unary(
        &self,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static, // (x, y) -> dy/dx
    ) -> Tensor<T> {
        let data: Vec<T> = self.data().iter().map(|&x| f(x)).collect();
        let y = Rc::new(data);
        let y_back = Rc::clone(&y);
        Tensor::from_op_shared(self.shape().to_vec(), y, vec![self.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| {
                let x = ps[0].data();
                for i in 0..ga.len() {
                    ga[i] += g[i] * df(x[i], y_back[i]);
                }
            });
        })
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.unary(sigmoid_scalar, |_, y| y * (T::one() - y))
    }

    /// `x * sigmoid(x)`.
    pub fn silu(&self) -> Tensor<T> {
        self.unary(
            |x| x * sigmoid_scalar(x),
            |x, _| {
                let s = sigmoid_scalar(x);
                s + x * s * (T::one() - s)
            },
        )
    }

    /// Derivative of silu as a forward op (used by hand-assembled gradients);
    /// its own backward uses the second derivative of silu.
    pub fn silu_prime(&self) -> Tensor<T> {
        self.unary(
            |x| {
                let s = sigmoid_scalar(x);
                s + x * s * (T::one() - s)
            },
            |x, _| {
                let s = sigmoid_scalar(x);
                let sp = s * (T::one() - s);
                sp * ((T::one() + T::one()) + x * (T::one() - (T::one() + T::one()) * s))
            },
        )
    }

    pub fn softplus(&self) -> Tensor<T> {
        self.unary(
            |x| {
                // max(x,0) + ln(1 + exp(-|x|)) is stable at both tails
                let m = if x > T::zero() { x } else { T::zero() };
                m + (T::one() + (-x.abs()).exp()).ln()
            },
            |x, _| sigmoid_scalar(x),
        )
    }

    pub fn exp(&self) -> Tensor<T> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn ln(&self) -> Tensor<T> {
        self.unary(|x| x.ln(), |x, _| T::one() / x)
    }

    pub fn sqrt(&self) -> Tensor<T> {
        self.unary(
            |x| x.sqrt(),
            |_, y| {
                let two = T::one() + T::one();
                T::one() / (two * y)
            },
        )
    }

    pub fn square(&self) -> Tensor<T> {
        self.unary(|x| x * x, |x, _| (T::one() + T::one()) * x)
    }

    pub fn abs(&self) -> Tensor<T> {
        self.unary(
            |x| x.abs(),
            |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn recip(&self) -> Tensor<T> {
        self.unary(|x| T::one() / x, |_, y| -y * y)
    }

    pub fn clamp(&self, lo: T, hi: T) -> Tensor<T> {
        self.unary(
            move |x| {
                if x < lo {
                    lo
                } else if x > hi {
                    hi
                } else {
                    x
                }
            },
            move |x, _| {
                if (lo..=hi).contains(&x) {
                    T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    /// arccos of the input clamped into `[-1+eps, 1-eps]`; zero gradient in
    /// the clamped region.
    pub fn arccos_clamped(&self, eps: T) -> Tensor<T> {
        let lo = -T::one() + eps;
        let hi = T::one() - eps;
        self.unary(
            move |x| {
                let xc = if x < lo {
                    lo
                } else if x > hi {
                    hi
                } else {
                    x
                };
                xc.acos()
            },
            move |x, _| {
                if x <= lo || x >= hi {
                    T::zero()
                } else {
                    -T::one() / (T::one() - x * x).sqrt()
                }
            },
        )
    }

    // ── reductions ──────────────────────────────────────────────────

    pub fn sum_all(&self) -> Tensor<T> {
        let mut acc = T::zero();
        for &x in self.data() {
            acc += x;
        }
        Tensor::from_op(vec![1], vec![acc], vec![self.clone()], |g, ps| {
            ps[0].accumulate_grad(|ga| ga.iter_mut().for_each(|x| *x += g[0]));
        })
    }

    pub fn mean_all(&self) -> Tensor<T> {
        let n = T::from_f64(self.numel() as f64);
        self.sum_all().mul_scalar(T::one() / n)
    }

    /// Row sums of a 2-D tensor: `[n,d] -> [n]`.
    pub fn sum_axis1(&self) -> Tensor<T> {
        let (n, d) = self.assert_2d("sum_axis1");
        let x = self.data();
        let mut out = vec![T::zero(); n];
        for r in 0..n {
            for c in 0..d {
                out[r] += x[r * d + c];
            }
        }
        Tensor::from_op(vec![n], out, vec![self.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| {
                for r in 0..n {
                    for c in 0..d {
                        ga[r * d + c] += g[r];
                    }
                }
            });
        })
    }

    /// Euclidean norm of the flattened tensor, as a `[1]` tensor.
    /// Accumulates in f64 so single-precision norms are ulp-accurate.
    pub fn l2norm(&self) -> Tensor<T> {
        let mut acc = 0.0f64;
        for &x in self.data() {
            let v = x.into_f64();
            acc += v * v;
        }
        let norm = T::from_f64(acc.sqrt());
        Tensor::from_op(vec![1], vec![norm], vec![self.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| {
                let x = ps[0].data();
                if norm > T::zero() {
                    let f = g[0] / norm;
                    for i in 0..ga.len() {
                        ga[i] += f * x[i];
                    }
                }
            });
        })
    }

    /// Alias of [`l2norm`](Tensor::l2norm) for matrices.
    pub fn frobenius_norm(&self) -> Tensor<T> {
        self.l2norm()
    }

    // ── normalization / attention ───────────────────────────────────

    /// Row-wise softmax of a 2-D tensor.
    pub fn softmax_rows(&self) -> Tensor<T> {
        let (n, d) = self.assert_2d("softmax_rows");
        let x = self.data();
        let mut data = vec![T::zero(); n * d];
        for r in 0..n {
            let row = &x[r * d..(r + 1) * d];
            let mut m = row[0];
            for &v in row {
                if v > m {
                    m = v;
                }
            }
            let mut sum = T::zero();
            for c in 0..d {
                let e = (row[c] - m).exp();
                data[r * d + c] = e;
                sum += e;
            }
            for c in 0..d {
                data[r * d + c] /= sum;
            }
        }
        let y = Rc::new(data);
        let y_back = Rc::clone(&y);
        Tensor::from_op_shared(vec![n, d], y, vec![self.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| {
                for r in 0..n {
                    let yr = &y_back[r * d..(r + 1) * d];
                    let gr = &g[r * d..(r + 1) * d];
                    let mut dot = T::zero();
                    for c in 0..d {
                        dot += yr[c] * gr[c];
                    }
                    for c in 0..d {
                        ga[r * d + c] += yr[c] * (gr[c] - dot);
                    }
                }
            });
        })
    }

    /// Divide each row by its root-mean-square (gain handled by the caller).
    pub fn rmsnorm_rows(&self, eps: T) -> Tensor<T> {
        let (n, d) = self.assert_2d("rmsnorm_rows");
        let x = self.data();
        let dn = T::from_f64(d as f64);
        let mut out = vec![T::zero(); n * d];
        let mut rms = vec![T::zero(); n];
        for r in 0..n {
            let mut acc = T::zero();
            for c in 0..d {
                let v = x[r * d + c];
                acc += v * v;
            }
            let m = (acc / dn + eps).sqrt();
            rms[r] = m;
            for c in 0..d {
                out[r * d + c] = x[r * d + c] / m;
            }
        }
        let rms = Rc::new(rms);
        Tensor::from_op(vec![n, d], out, vec![self.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| {
                let x = ps[0].data();
                for r in 0..n {
                    let m = rms[r];
                    let mut dot = T::zero();
                    for c in 0..d {
                        dot += g[r * d + c] * x[r * d + c];
                    }
                    let m3 = m * m * m;
                    for c in 0..d {
                        ga[r * d + c] += g[r * d + c] / m - x[r * d + c] * dot / (dn * m3);
                    }
                }
            });
        })
    }

    /// RMS normalization along `axis` of a 2-D tensor (gain of ones).
    pub fn rmsnorm(&self, axis: usize, eps: T) -> Tensor<T> {
        match axis {
            1 => self.rmsnorm_rows(eps),
            0 => self.transpose2().rmsnorm_rows(eps).transpose2(),
            _ => panic!("rmsnorm axis {axis} out of range for 2-D tensor"),
        }
    }

    // ── shape ops ───────────────────────────────────────────────────

    pub fn reshape(&self, shape: &[usize]) -> Tensor<T> {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.numel(),
            "reshape {:?} -> {:?}",
            self.shape(),
            shape
        );
        Tensor::from_op_shared(shape.to_vec(), self.data_rc(), vec![self.clone()], |g, ps| {
            ps[0].accumulate_grad(|ga| ga.iter_mut().zip(g).for_each(|(x, &d)| *x += d));
        })
    }

    pub fn transpose2(&self) -> Tensor<T> {
        let (m, n) = self.assert_2d("transpose2");
        let x = self.data();
        let mut out = vec![T::zero(); m * n];
        for r in 0..m {
            for c in 0..n {
                out[c * m + r] = x[r * n + c];
            }
        }
        Tensor::from_op(vec![n, m], out, vec![self.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| {
                for r in 0..m {
                    for c in 0..n {
                        ga[r * n + c] += g[c * m + r];
                    }
                }
            });
        })
    }

    /// Rows `r0..r1` of a 2-D tensor.
    pub fn slice_rows(&self, r0: usize, r1: usize) -> Tensor<T> {
        let (n, d) = self.assert_2d("slice_rows");
        assert!(r0 <= r1 && r1 <= n, "slice_rows {r0}..{r1} of {n}");
        let out = self.data()[r0 * d..r1 * d].to_vec();
        Tensor::from_op(vec![r1 - r0, d], out, vec![self.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| {
                ga[r0 * d..r1 * d].iter_mut().zip(g).for_each(|(x, &v)| *x += v);
            });
        })
    }

    /// Columns `c0..c1` of a 2-D tensor.
    pub fn slice_cols(&self, c0: usize, c1: usize) -> Tensor<T> {
        let (n, d) = self.assert_2d("slice_cols");
        assert!(c0 <= c1 && c1 <= d, "slice_cols {c0}..{c1} of {d}");
        let w = c1 - c0;
        let x = self.data();
        let mut out = vec![T::zero(); n * w];
        for r in 0..n {
            out[r * w..(r + 1) * w].copy_from_slice(&x[r * d + c0..r * d + c1]);
        }
        Tensor::from_op(vec![n, w], out, vec![self.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| {
                for r in 0..n {
                    for c in 0..w {
                        ga[r * d + c0 + c] += g[r * w + c];
                    }
                }
            });
        })
    }

    /// Duplicate/reorder rows by index; backward scatter-adds.
    pub fn gather_rows(&self, idx: &[usize]) -> Tensor<T> {
        let (n, d) = self.assert_2d("gather_rows");
        let x = self.data();
        let mut out = vec![T::zero(); idx.len() * d];
        for (o, &i) in idx.iter().enumerate() {
            assert!(i < n, "gather_rows index {i} out of {n}");
            out[o * d..(o + 1) * d].copy_from_slice(&x[i * d..(i + 1) * d]);
        }
        let idx: Rc<Vec<usize>> = Rc::new(idx.to_vec());
        Tensor::from_op(vec![idx.len(), d], out, vec![self.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| {
                for (o, &i) in idx.iter().enumerate() {
                    for c in 0..d {
                        ga[i * d + c] += g[o * d + c];
                    }
                }
            });
        })
    }

    // ── geometry-flavoured ops ──────────────────────────────────────

    /// Row-wise 3-D cross product for `[n,3]` (or a single `[3]`) tensors.
    pub fn cross3(&self, rhs: &Tensor<T>) -> crate::Result<Tensor<T>> {
        if self.shape() != rhs.shape() {
            return Err(crate::Error::Shape(format!(
                "cross3 operands {:?} vs {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let last = *self.shape().last().unwrap_or(&0);
        if last != 3 {
            return Err(crate::Error::Shape(format!(
                "cross3 requires trailing dimension 3, got {:?}",
                self.shape()
            )));
        }
        let n = self.numel() / 3;
        let a = self.data();
        let b = rhs.data();
        let mut out = vec![T::zero(); n * 3];
        for r in 0..n {
            let (a, b) = (&a[r * 3..r * 3 + 3], &b[r * 3..r * 3 + 3]);
            out[r * 3] = a[1] * b[2] - a[2] * b[1];
            out[r * 3 + 1] = a[2] * b[0] - a[0] * b[2];
            out[r * 3 + 2] = a[0] * b[1] - a[1] * b[0];
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), rhs.clone()],
            move |g, ps| {
                // d(u x v): grad_u = v x g, grad_v = g x u
                ps[0].accumulate_grad(|ga| {
                    let v = ps[1].data();
                    for r in 0..n {
                        let (v, gr) = (&v[r * 3..r * 3 + 3], &g[r * 3..r * 3 + 3]);
                        ga[r * 3] += v[1] * gr[2] - v[2] * gr[1];
                        ga[r * 3 + 1] += v[2] * gr[0] - v[0] * gr[2];
                        ga[r * 3 + 2] += v[0] * gr[1] - v[1] * gr[0];
                    }
                });
                ps[1].accumulate_grad(|gb| {
                    let u = ps[0].data();
                    for r in 0..n {
                        let (u, gr) = (&u[r * 3..r * 3 + 3], &g[r * 3..r * 3 + 3]);
                        gb[r * 3] += gr[1] * u[2] - gr[2] * u[1];
                        gb[r * 3 + 1] += gr[2] * u[0] - gr[0] * u[2];
                        gb[r * 3 + 2] += gr[0] * u[1] - gr[1] * u[0];
                    }
                });
            },
        ))
    }

    /// Rotate a constant 3-vector by each row's unit quaternion (w,x,y,z):
    /// `r = (w^2 - |v|^2) u + 2 (v.u) v + 2 w (v x u)`. `[n,4] -> [n,3]`.
    pub fn quat_rotate_const(&self, u: [f64; 3]) -> Tensor<T> {
        let (n, four) = self.assert_2d("quat_rotate_const");
        assert_eq!(four, 4, "quaternion rows must have 4 entries");
        let uu: [T; 3] = [T::from_f64(u[0]), T::from_f64(u[1]), T::from_f64(u[2])];
        let q = self.data();
        let two = T::one() + T::one();
        let cross = |a: &[T], b: &[T]| -> [T; 3] {
            [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ]
        };
        let mut out = vec![T::zero(); n * 3];
        for r in 0..n {
            let (w, v) = (q[r * 4], &q[r * 4 + 1..r * 4 + 4]);
            let vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            let vu = v[0] * uu[0] + v[1] * uu[1] + v[2] * uu[2];
            let vxu = cross(v, &uu);
            for k in 0..3 {
                out[r * 3 + k] =
                    (w * w - vv) * uu[k] + two * vu * v[k] + two * w * vxu[k];
            }
        }
        Tensor::from_op(vec![n, 3], out, vec![self.clone()], move |g, ps| {
            ps[0].accumulate_grad(|gq| {
                let q = ps[0].data();
                for r in 0..n {
                    let (w, v) = (q[r * 4], &q[r * 4 + 1..r * 4 + 4]);
                    let gr = &g[r * 3..r * 3 + 3];
                    let vu = v[0] * uu[0] + v[1] * uu[1] + v[2] * uu[2];
                    let vxu = cross(v, &uu);
                    // d r / d w = 2 w u + 2 (v x u)
                    let mut gw = T::zero();
                    for k in 0..3 {
                        gw += gr[k] * (two * w * uu[k] + two * vxu[k]);
                    }
                    gq[r * 4] += gw;
                    // d r_k / d v_j = -2 v_j u_k + 2 u_j v_k + 2 (v.u) d_jk + 2 w (e_j x u)_k
                    let ej_cross_u: [[T; 3]; 3] = [
                        [T::zero(), -uu[2], uu[1]],
                        [uu[2], T::zero(), -uu[0]],
                        [-uu[1], uu[0], T::zero()],
                    ];
                    for j in 0..3 {
                        let mut gv = T::zero();
                        for k in 0..3 {
                            let mut d = -two * v[j] * uu[k] + two * uu[j] * v[k]
                                + two * w * ej_cross_u[j][k];
                            if j == k {
                                d += two * vu;
                            }
                            gv += gr[k] * d;
                        }
                        gq[r * 4 + 1 + j] += gv;
                    }
                }
            });
        })
    }

    /// Rotate adjacent element pairs of each row by per-pair angles given as
    /// constant `cos`/`sin` tables of shape `[n, d/2]`. Used for rotary
    /// position encoding; the backward pass applies the inverse rotation.
    pub fn rotate_pairs(&self, cos: &Tensor<T>, sin: &Tensor<T>) -> Tensor<T> {
        let (n, d) = self.assert_2d("rotate_pairs");
        assert_eq!(d % 2, 0, "rotate_pairs needs an even row length");
        let h = d / 2;
        assert_eq!(cos.shape(), &[n, h], "rotate_pairs cos table");
        assert_eq!(sin.shape(), &[n, h], "rotate_pairs sin table");
        let (x, cs, sn) = (self.data(), cos.data_rc(), sin.data_rc());
        let mut out = vec![T::zero(); n * d];
        for r in 0..n {
            for p in 0..h {
                let (c, s) = (cs[r * h + p], sn[r * h + p]);
                let (x0, x1) = (x[r * d + 2 * p], x[r * d + 2 * p + 1]);
                out[r * d + 2 * p] = x0 * c - x1 * s;
                out[r * d + 2 * p + 1] = x0 * s + x1 * c;
            }
        }
        Tensor::from_op(vec![n, d], out, vec![self.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| {
                for r in 0..n {
                    for p in 0..h {
                        let (c, s) = (cs[r * h + p], sn[r * h + p]);
                        let (g0, g1) = (g[r * d + 2 * p], g[r * d + 2 * p + 1]);
                        ga[r * d + 2 * p] += g0 * c + g1 * s;
                        ga[r * d + 2 * p + 1] += -g0 * s + g1 * c;
                    }
                }
            });
        })
    }

    /// 3x3 zero-padded neighborhood unfold of a `[h*w, c]` pixel grid into
    /// `[h*w, 9c]`; a 3x3 convolution is then a plain matmul.
    pub fn im2col3x3(&self, h: usize, w: usize) -> Tensor<T> {
        let (n, c) = self.assert_2d("im2col3x3");
        assert_eq!(n, h * w, "im2col3x3 grid {h}x{w} vs {n} rows");
        let x = self.data();
        let mut out = vec![T::zero(); n * 9 * c];
        for r in 0..h {
            for cc in 0..w {
                let p = r * w + cc;
                for (k, (dr, dc)) in NEIGH3.iter().enumerate() {
                    let rr = r as isize + dr;
                    let ww = cc as isize + dc;
                    if rr < 0 || ww < 0 || rr >= h as isize || ww >= w as isize {
                        continue;
                    }
                    let q = rr as usize * w + ww as usize;
                    out[p * 9 * c + k * c..p * 9 * c + (k + 1) * c]
                        .copy_from_slice(&x[q * c..(q + 1) * c]);
                }
            }
        }
        Tensor::from_op(vec![n, 9 * c], out, vec![self.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| {
                for r in 0..h {
                    for cc in 0..w {
                        let p = r * w + cc;
                        for (k, (dr, dc)) in NEIGH3.iter().enumerate() {
                            let rr = r as isize + dr;
                            let ww = cc as isize + dc;
                            if rr < 0 || ww < 0 || rr >= h as isize || ww >= w as isize {
                                continue;
                            }
                            let q = rr as usize * w + ww as usize;
                            for ch in 0..c {
                                ga[q * c + ch] += g[p * 9 * c + k * c + ch];
                            }
                        }
                    }
                }
            });
        })
    }

    /// Bilinear upsample of a `[h*w, c]` grid to `[hh*ww, c]` (half-pixel
    /// centers, edges clamped).
    pub fn upsample_bilinear(&self, h: usize, w: usize, hh: usize, ww: usize) -> Tensor<T> {
        let (n, c) = self.assert_2d("upsample_bilinear");
        assert_eq!(n, h * w, "upsample_bilinear grid {h}x{w} vs {n} rows");
        let rows = axis_weights(h, hh);
        let cols = axis_weights(w, ww);
        let x = self.data();
        let mut out = vec![T::zero(); hh * ww * c];
        for (r, &(r0, r1, fr)) in rows.iter().enumerate() {
            for (cc, &(c0, c1, fc)) in cols.iter().enumerate() {
                let p = (r * ww + cc) * c;
                for ch in 0..c {
                    let v00 = x[(r0 * w + c0) * c + ch].into_f64();
                    let v01 = x[(r0 * w + c1) * c + ch].into_f64();
                    let v10 = x[(r1 * w + c0) * c + ch].into_f64();
                    let v11 = x[(r1 * w + c1) * c + ch].into_f64();
                    let v = v00 * (1.0 - fr) * (1.0 - fc)
                        + v01 * (1.0 - fr) * fc
                        + v10 * fr * (1.0 - fc)
                        + v11 * fr * fc;
                    out[p + ch] = T::from_f64(v);
                }
            }
        }
        let rows = Rc::new(rows);
        let cols = Rc::new(cols);
        Tensor::from_op(vec![hh * ww, c], out, vec![self.clone()], move |g, ps| {
            ps[0].accumulate_grad(|ga| {
                for (r, &(r0, r1, fr)) in rows.iter().enumerate() {
                    for (cc, &(c0, c1, fc)) in cols.iter().enumerate() {
                        let p = (r * ww + cc) * c;
                        for ch in 0..c {
                            let gv = g[p + ch].into_f64();
                            let add = |buf: &mut [T], q: usize, wgt: f64| {
                                buf[q * c + ch] += T::from_f64(gv * wgt);
                            };
                            add(ga, r0 * w + c0, (1.0 - fr) * (1.0 - fc));
                            add(ga, r0 * w + c1, (1.0 - fr) * fc);
                            add(ga, r1 * w + c0, fr * (1.0 - fc));
                            add(ga, r1 * w + c1, fr * fc);
                        }
                    }
                }
            });
        })
    }
}

const NEIGH3: [(isize, isize); 9] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 0),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Per-output (lo index, hi index, hi weight) for 1-D bilinear resampling.
fn axis_weights(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            let s = (i as f64 + 0.5) * (src as f64 / dst as f64) - 0.5;
            let s = s.clamp(0.0, (src - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

fn sigmoid_scalar<T: Real>(x: T) -> T {
    // Split on sign so exp never overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Outer product of two 1-D tensors: `[m] x [n] -> [m,n]`.
pub fn outer<T: Real>(u: &Tensor<T>, v: &Tensor<T>) -> Tensor<T> {
    assert_eq!(u.rank(), 1, "outer lhs must be 1-D");
    assert_eq!(v.rank(), 1, "outer rhs must be 1-D");
    let (m, n) = (u.numel(), v.numel());
    let (ud, vd) = (u.data(), v.data());
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[i * n + j] = ud[i] * vd[j];
        }
    }
    Tensor::from_op(vec![m, n], out, vec![u.clone(), v.clone()], move |g, ps| {
        ps[0].accumulate_grad(|gu| {
            let v = ps[1].data();
            for i in 0..m {
                for j in 0..n {
                    gu[i] += g[i * n + j] * v[j];
                }
            }
        });
        ps[1].accumulate_grad(|gv| {
            let u = ps[0].data();
            for i in 0..m {
                for j in 0..n {
                    gv[j] += g[i * n + j] * u[i];
                }
            }
        });
    })
}

/// Concatenate 2-D tensors with equal column counts along rows.
pub fn concat_rows<T: Real>(parts: &[Tensor<T>]) -> Tensor<T> {
    assert!(!parts.is_empty(), "concat_rows of nothing");
    let d = parts[0].dim(1);
    let mut rows = 0;
    for p in parts {
        assert_eq!(p.rank(), 2, "concat_rows expects 2-D parts");
        assert_eq!(p.dim(1), d, "concat_rows column mismatch");
        rows += p.dim(0);
    }
    let mut out = Vec::with_capacity(rows * d);
    for p in parts {
        out.extend_from_slice(p.data());
    }
    let sizes: Rc<Vec<usize>> = Rc::new(parts.iter().map(|p| p.dim(0)).collect());
    Tensor::from_op(vec![rows, d], out, parts.to_vec(), move |g, ps| {
        let mut r = 0;
        for (p, &nr) in ps.iter().zip(sizes.iter()) {
            p.accumulate_grad(|gp| {
                gp.iter_mut().zip(&g[r * d..(r + nr) * d]).for_each(|(x, &v)| *x += v);
            });
            r += nr;
        }
    })
}

/// Concatenate 2-D tensors with equal row counts along columns.
pub fn concat_cols<T: Real>(parts: &[Tensor<T>]) -> Tensor<T> {
    assert!(!parts.is_empty(), "concat_cols of nothing");
    let n = parts[0].dim(0);
    let mut width = 0;
    for p in parts {
        assert_eq!(p.rank(), 2, "concat_cols expects 2-D parts");
        assert_eq!(p.dim(0), n, "concat_cols row mismatch");
        width += p.dim(1);
    }
    let mut out = vec![T::zero(); n * width];
    let mut c0 = 0;
    for p in parts {
        let d = p.dim(1);
        let x = p.data();
        for r in 0..n {
            out[r * width + c0..r * width + c0 + d].copy_from_slice(&x[r * d..(r + 1) * d]);
        }
        c0 += d;
    }
    let widths: Rc<Vec<usize>> = Rc::new(parts.iter().map(|p| p.dim(1)).collect());
    Tensor::from_op(vec![n, width], out, parts.to_vec(), move |g, ps| {
        let mut c0 = 0;
        for (p, &d) in ps.iter().zip(widths.iter()) {
            p.accumulate_grad(|gp| {
                for r in 0..n {
                    for c in 0..d {
                        gp[r * d + c] += g[r * width + c0 + c];
                    }
                }
            });
            c0 += d;
        }
    })
}

#[cfg(test)]
mod tests {
    use super::super::tensor::Tensor;
    use super::*;

    #[test]
    fn matmul_identity_is_noop() {
        let a = Tensor::<f64>::from_vec(&[3, 3], (1..=9).map(|x| x as f64).collect());
        let y = Tensor::eye(3).matmul(&a);
        assert_eq!(y.data(), a.data());
    }

    #[test]
    fn matmul_hand_case() {
        let a = Tensor::<f64>::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::<f64>::from_vec(&[2, 1], vec![1.0, 1.0]);
        let y = a.matmul(&b);
        assert_eq!(y.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Tensor::<f64>::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]);
        let b = Tensor::<f64>::from_vec(&[3, 2], vec![7., 8., 9., 10., 11., 12.]);
        let y = a.matmul(&b);
        let y_nt = a.matmul_nt(&b.transpose2());
        let y_tn = a.transpose2().matmul_tn(&b);
        assert_eq!(y.data(), y_nt.data());
        assert_eq!(y.data(), y_tn.data());
    }

    #[test]
    fn silu_zero_is_zero() {
        let y = Tensor::<f64>::zeros(&[3]).silu();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rmsnorm_of_constant_vector_is_unit() {
        let y = Tensor::<f64>::full(&[1, 4], -2.5).rmsnorm(1, 1e-12);
        for &v in y.data() {
            assert!((v + 1.0).abs() < 1e-6, "expected -1, got {v}");
        }
    }

    #[test]
    fn cross3_basis() {
        let x = Tensor::<f64>::from_vec(&[3], vec![1.0, 0.0, 0.0]);
        let y = Tensor::<f64>::from_vec(&[3], vec![0.0, 1.0, 0.0]);
        let z = x.cross3(&y).unwrap();
        assert_eq!(z.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn cross3_rejects_bad_trailing_dim() {
        let x = Tensor::<f64>::zeros(&[2, 4]);
        assert!(x.cross3(&Tensor::zeros(&[2, 4])).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::<f64>::from_vec(&[2, 3], vec![0.1, 1.0, -2.0, 5.0, 5.0, 5.0]);
        let y = x.softmax_rows();
        for r in 0..2 {
            let s: f64 = y.data()[r * 3..(r + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn slice_concat_roundtrip() {
        let x = Tensor::<f64>::from_vec(&[3, 2], vec![1., 2., 3., 4., 5., 6.]);
        let top = x.slice_rows(0, 1);
        let rest = x.slice_rows(1, 3);
        let y = concat_rows(&[top, rest]);
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn upsample_preserves_constant_fields() {
        let x = Tensor::<f64>::full(&[4, 1], 3.25);
        let y = x.upsample_bilinear(2, 2, 8, 8);
        assert_eq!(y.shape(), &[64, 1]);
        assert!(y.data().iter().all(|&v| (v - 3.25).abs() < 1e-12));
    }
}
