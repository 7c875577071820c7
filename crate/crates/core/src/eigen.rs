//! Dense real eigenvalues: balancing, Hessenberg reduction by stabilized
//! elementary similarities, then Francis double-shift QR.
//!
//! Works on a 1-based `(n+1)²` buffer so the index arithmetic follows the
//! classic formulation without off-by-one translation.

use num_complex::Complex64;

struct Buf {
    n: usize,
    a: Vec<f64>,
}

impl Buf {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.n + 1) + j]
    }
    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let n = self.n;
        self.a[i * (n + 1) + j] = v;
    }
    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let n = self.n;
        self.a[i * (n + 1) + j] += v;
    }
    fn swap(&mut self, i1: usize, j1: usize, i2: usize, j2: usize) {
        let n = self.n;
        self.a.swap(i1 * (n + 1) + j1, i2 * (n + 1) + j2);
    }
}

pub(crate) struct QrOutcome {
    pub values: Vec<Complex64>,
    pub sweeps: usize,
}

/// Fails with the sweep count when more than `max_sweeps` QR steps are used.
pub(crate) fn real_eigenvalues(rows: &[f64], n: usize, max_sweeps: usize) -> Result<QrOutcome, usize> {
    let mut b = Buf { n, a: vec![0.0; (n + 1) * (n + 1)] };
    for i in 0..n {
        for j in 0..n {
            b.set(i + 1, j + 1, rows[i * n + j]);
        }
    }
    balance(&mut b);
    hessenberg(&mut b);
    hqr(&mut b, max_sweeps)
}

fn balance(b: &mut Buf) {
    const RADIX: f64 = 2.0;
    const SQRDX: f64 = RADIX * RADIX;
    let n = b.n;
    let mut done = false;
    while !done {
        done = true;
        for i in 1..=n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 1..=n {
                if j != i {
                    c += b.at(j, i).abs();
                    r += b.at(i, j).abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= SQRDX;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= SQRDX;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 1..=n {
                        let v = b.at(i, j) * g;
                        b.set(i, j, v);
                    }
                    for j in 1..=n {
                        let v = b.at(j, i) * f;
                        b.set(j, i, v);
                    }
                }
            }
        }
    }
}

fn hessenberg(b: &mut Buf) {
    let n = b.n;
    if n < 3 {
        return;
    }
    for m in 2..n {
        let mut x = 0.0f64;
        let mut i = m;
        for j in m..=n {
            if b.at(j, m - 1).abs() > x.abs() {
                x = b.at(j, m - 1);
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..=n {
                b.swap(i, j, m, j);
            }
            for j in 1..=n {
                b.swap(j, i, j, m);
            }
        }
        if x != 0.0 {
            for i in (m + 1)..=n {
                let mut y = b.at(i, m - 1);
                if y != 0.0 {
                    y /= x;
                    b.set(i, m - 1, y);
                    for j in m..=n {
                        let v = y * b.at(m, j);
                        b.add(i, j, -v);
                    }
                    for j in 1..=n {
                        let v = y * b.at(j, i);
                        b.add(j, m, v);
                    }
                }
            }
        }
    }
    for i in 3..=n {
        for j in 1..(i - 1) {
            b.set(i, j, 0.0);
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

fn hqr(b: &mut Buf, max_sweeps: usize) -> Result<QrOutcome, usize> {
    const EPS: f64 = f64::EPSILON;
    let n = b.n;
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += b.at(i, j).abs();
        }
    }
    let mut sweeps = 0usize;
    let mut nn = n;
    let mut t = 0.0;
    while nn >= 1 {
        let mut its = 0usize;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = b.at(l - 1, l - 1).abs() + b.at(l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if b.at(l, l - 1).abs() <= EPS * s {
                    b.set(l, l - 1, 0.0);
                    break;
                }
                l -= 1;
            }
            let mut x = b.at(nn, nn);
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
            } else {
                let mut y = b.at(nn - 1, nn - 1);
                let mut w = b.at(nn, nn - 1) * b.at(nn - 1, nn);
                if l == nn - 1 {
                    let p = 0.5 * (y - x);
                    let q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != 0.0 {
                            wr[nn] = x - w / z;
                        }
                        wi[nn - 1] = 0.0;
                        wi[nn] = 0.0;
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn -= 2;
                } else {
                    if sweeps >= max_sweeps {
                        return Err(sweeps);
                    }
                    if its > 0 && its.is_multiple_of(10) {
                        t += x;
                        for i in 1..=nn {
                            b.add(i, i, -x);
                        }
                        let s = b.at(nn, nn - 1).abs() + b.at(nn - 1, nn - 2).abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    sweeps += 1;
                    let mut m = nn - 2;
                    let (mut p, mut q, mut r, mut z);
                    loop {
                        z = b.at(m, m);
                        r = x - z;
                        let s = y - z;
                        p = (r * s - w) / b.at(m + 1, m) + b.at(m, m + 1);
                        q = b.at(m + 1, m + 1) - z - r - s;
                        r = b.at(m + 2, m + 1);
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = b.at(m, m - 1).abs() * (q.abs() + r.abs());
                        let v = p.abs() * (b.at(m - 1, m - 1).abs() + z.abs() + b.at(m + 1, m + 1).abs());
                        if u <= EPS * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nn {
                        b.set(i, i - 2, 0.0);
                        if i != m + 2 {
                            b.set(i, i - 3, 0.0);
                        }
                    }
                    let mut k = m;
                    while k < nn {
                        if k != m {
                            p = b.at(k, k - 1);
                            q = b.at(k + 1, k - 1);
                            r = 0.0;
                            if k != nn - 1 {
                                r = b.at(k + 2, k - 1);
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    let v = -b.at(k, k - 1);
                                    b.set(k, k - 1, v);
                                }
                            } else {
                                b.set(k, k - 1, -s * x);
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                p = b.at(k, j) + q * b.at(k + 1, j);
                                if k != nn - 1 {
                                    p += r * b.at(k + 2, j);
                                    b.add(k + 2, j, -p * z);
                                }
                                b.add(k + 1, j, -p * y);
                                b.add(k, j, -p * x);
                            }
                            let mmin = nn.min(k + 3);
                            for i in l..=mmin {
                                p = x * b.at(i, k) + y * b.at(i, k + 1);
                                if k != nn - 1 {
                                    p += z * b.at(i, k + 2);
                                    b.add(i, k + 2, -p * r);
                                }
                                b.add(i, k + 1, -p * q);
                                b.add(i, k, -p);
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 2 || l + 1 >= nn {
                break;
            }
        }
    }
    let values = (1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect();
    Ok(QrOutcome { values, sweeps })
}
