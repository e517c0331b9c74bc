//! Adaptive Dormand–Prince 8(5,3) integration with 7th-order dense output,
//! plus a bracketing root finder for event location on the dense output.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size collapsed to {h:e} at t = {t}")]
    StepSizeCollapse { t: f64, h: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    MaxSteps { t: f64, max_steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 200_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol * 1e-2,
            ..Default::default()
        }
    }
}

/// Counters and accumulated error of one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evals: usize,
    /// Sum of the absolute local error estimates of accepted steps.
    pub local_error_sum: f64,
}

/// Dense output over one accepted step `[t0, t0 + h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub h: f64,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// Absolute local error estimate of the step.
    pub local_error: f64,
    cont: [Vec<f64>; 8],
}

impl Segment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Whether `t` lies in the closed step interval.
    pub fn contains(&self, t: f64) -> bool {
        let (a, b) = if self.h >= 0.0 {
            (self.t0, self.t1())
        } else {
            (self.t1(), self.t0)
        };
        t >= a && t <= b
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let c = &self.cont;
        (0..self.y0.len())
            .map(|i| {
                let conpar = c[4][i] + (c[5][i] + (c[6][i] + c[7][i] * s) * s1) * s;
                c[0][i] + (c[1][i] + (c[2][i] + (c[3][i] + conpar * s1) * s) * s1) * s
            })
            .collect()
    }
}

/// Result of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub t: f64,
    pub y: Vec<f64>,
    pub stats: OdeStats,
    /// True when the observer asked to stop before `t_end`.
    pub stopped: bool,
    pub segments: Vec<Segment>,
}

impl OdeSolution {
    /// Dense evaluation at any time covered by the stored segments.
    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        let idx = self.segments.partition_point(|s| {
            if s.h >= 0.0 {
                s.t1() < t
            } else {
                s.t1() > t
            }
        });
        self.segments.get(idx).filter(|s| s.contains(t)).map(|s| s.eval(t))
    }
}

fn axpy_list(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (a, k) in terms {
        let ah = a * h;
        for (o, v) in out.iter_mut().zip(k.iter()) {
            *o += ah * v;
        }
    }
    out
}

fn combo(terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = vec![0.0; terms[0].1.len()];
    for (a, k) in terms {
        for (o, v) in out.iter_mut().zip(k.iter()) {
            *o += a * v;
        }
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end` (either direction).
///
/// `observer` sees every accepted step and may stop the run by returning
/// `true`. Segments are kept when `keep_dense` is set.
pub fn solve<F, O>(
    f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    keep_dense: bool,
    mut observer: O,
) -> Result<OdeSolution, OdeError>
where
    F: Fn(f64, &[f64], &mut [f64]),
    O: FnMut(&Segment) -> bool,
{
    let n = y0.len();
    let eval = |t: f64, y: &[f64]| {
        let mut d = vec![0.0; n];
        f(t, y, &mut d);
        d
    };
    let mut stats = OdeStats::default();
    let mut segments = Vec::new();
    let mut t = t0;
    let mut y = y0.to_vec();
    if t_end == t0 {
        return Ok(OdeSolution {
            t,
            y,
            stats,
            stopped: false,
            segments,
        });
    }
    let dir = (t_end - t0).signum();
    let sk_of = |y: &[f64], z: &[f64]| -> Vec<f64> {
        y.iter()
            .zip(z)
            .map(|(a, b)| opts.atol + opts.rtol * a.abs().max(b.abs()))
            .collect()
    };

    let mut k1 = eval(t, &y);
    stats.evals += 1;

    // initial step (Hairer's heuristic)
    let mut h = {
        let sk = sk_of(&y, &y);
        let dnf: f64 = k1.iter().zip(&sk).map(|(k, s)| (k / s).powi(2)).sum();
        let dny: f64 = y.iter().zip(&sk).map(|(v, s)| (v / s).powi(2)).sum();
        let mut h0 = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h0 = h0.min(opts.h_max) * dir;
        let y1 = axpy_list(&y, h0, &[(1.0, &k1)]);
        let k2 = eval(t + h0, &y1);
        stats.evals += 1;
        let der2 = k2
            .iter()
            .zip(&k1)
            .zip(&sk)
            .map(|((a, b), s)| ((a - b) / s).powi(2))
            .sum::<f64>()
            .sqrt()
            / h0.abs();
        let der12 = der2.max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (h0.abs() * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(1.0 / 8.0)
        };
        (100.0 * h0.abs()).min(h1).min(opts.h_max) * dir
    };

    let (safe, facc1, facc2, expo1): (f64, f64, f64, f64) = (0.9, 1.0 / 0.333, 1.0 / 6.0, 1.0 / 8.0);
    let mut last_rejected = false;
    let mut steps = 0usize;
    loop {
        if steps >= opts.max_steps {
            return Err(OdeError::MaxSteps {
                t,
                max_steps: opts.max_steps,
            });
        }
        steps += 1;
        let mut last = false;
        if (t + h - t_end) * dir >= 0.0 {
            h = t_end - t;
            last = true;
        }
        if h.abs() <= 1e-14 * t.abs().max(1.0) {
            return Err(OdeError::StepSizeCollapse { t, h });
        }

        let k2 = eval(t + C2 * h, &axpy_list(&y, h, &[(A21, &k1)]));
        let k3 = eval(t + C3 * h, &axpy_list(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = eval(t + C4 * h, &axpy_list(&y, h, &[(A41, &k1), (A43, &k3)]));
        let k5 = eval(
            t + C5 * h,
            &axpy_list(&y, h, &[(A51, &k1), (A53, &k3), (A54, &k4)]),
        );
        let k6 = eval(
            t + C6 * h,
            &axpy_list(&y, h, &[(A61, &k1), (A64, &k4), (A65, &k5)]),
        );
        let k7 = eval(
            t + C7 * h,
            &axpy_list(&y, h, &[(A71, &k1), (A74, &k4), (A75, &k5), (A76, &k6)]),
        );
        let k8 = eval(
            t + C8 * h,
            &axpy_list(
                &y,
                h,
                &[(A81, &k1), (A84, &k4), (A85, &k5), (A86, &k6), (A87, &k7)],
            ),
        );
        let k9 = eval(
            t + C9 * h,
            &axpy_list(
                &y,
                h,
                &[
                    (A91, &k1),
                    (A94, &k4),
                    (A95, &k5),
                    (A96, &k6),
                    (A97, &k7),
                    (A98, &k8),
                ],
            ),
        );
        let k10 = eval(
            t + C10 * h,
            &axpy_list(
                &y,
                h,
                &[
                    (A101, &k1),
                    (A104, &k4),
                    (A105, &k5),
                    (A106, &k6),
                    (A107, &k7),
                    (A108, &k8),
                    (A109, &k9),
                ],
            ),
        );
        let k11 = eval(
            t + C11 * h,
            &axpy_list(
                &y,
                h,
                &[
                    (A111, &k1),
                    (A114, &k4),
                    (A115, &k5),
                    (A116, &k6),
                    (A117, &k7),
                    (A118, &k8),
                    (A119, &k9),
                    (A1110, &k10),
                ],
            ),
        );
        let t_new = t + h;
        let yy1 = axpy_list(
            &y,
            h,
            &[
                (A121, &k1),
                (A124, &k4),
                (A125, &k5),
                (A126, &k6),
                (A127, &k7),
                (A128, &k8),
                (A129, &k9),
                (A1210, &k10),
                (A1211, &k11),
            ],
        );
        let k12 = eval(t_new, &yy1);
        stats.evals += 11;
        let incr = combo(&[
            (B1, &k1),
            (B6, &k6),
            (B7, &k7),
            (B8, &k8),
            (B9, &k9),
            (B10, &k10),
            (B11, &k11),
            (B12, &k12),
        ]);
        let y_new = axpy_list(&y, h, &[(1.0, &incr)]);
        if y_new.iter().any(|v| !v.is_finite()) {
            if h.abs() < 1e-12 {
                return Err(OdeError::NonFinite { t });
            }
            h *= 0.25;
            last_rejected = true;
            stats.rejected += 1;
            continue;
        }

        let sk = sk_of(&y, &y_new);
        let (mut err, mut err2) = (0.0, 0.0);
        let mut err_abs: f64 = 0.0;
        for i in 0..n {
            let e2 = incr[i] - BHH1 * k1[i] - BHH2 * k9[i] - BHH3 * k12[i];
            err2 += (e2 / sk[i]).powi(2);
            let e = ER1 * k1[i]
                + ER6 * k6[i]
                + ER7 * k7[i]
                + ER8 * k8[i]
                + ER9 * k9[i]
                + ER10 * k10[i]
                + ER11 * k11[i]
                + ER12 * k12[i];
            err += (e / sk[i]).powi(2);
            err_abs = err_abs.max((e * h).abs());
        }
        let mut deno = err + 0.01 * err2;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h.abs() * err * (1.0 / (deno * n as f64)).sqrt();
        // scale the 5th-order vector estimate like the blended norm above
        let err_abs = if err > 0.0 {
            err * sk.iter().cloned().fold(0.0, f64::max)
        } else {
            err_abs
        };

        let fac11 = err.powf(expo1);
        let fac = facc2.max(facc1.min(fac11 / safe));
        let mut h_new = h / fac;

        if err <= 1.0 {
            let k13 = eval(t_new, &y_new);
            stats.evals += 1;
            stats.accepted += 1;
            stats.local_error_sum += err_abs;

            // dense output
            let ydiff: Vec<f64> = y_new.iter().zip(&y).map(|(a, b)| a - b).collect();
            let bspl: Vec<f64> = k1.iter().zip(&ydiff).map(|(k, d)| h * k - d).collect();
            let cont3 = bspl.clone();
            let cont4: Vec<f64> = (0..n).map(|i| ydiff[i] - h * k13[i] - bspl[i]).collect();
            let mut cont5 = combo(&[
                (D41, &k1),
                (D46, &k6),
                (D47, &k7),
                (D48, &k8),
                (D49, &k9),
                (D410, &k10),
                (D411, &k11),
                (D412, &k12),
            ]);
            let mut cont6 = combo(&[
                (D51, &k1),
                (D56, &k6),
                (D57, &k7),
                (D58, &k8),
                (D59, &k9),
                (D510, &k10),
                (D511, &k11),
                (D512, &k12),
            ]);
            let mut cont7 = combo(&[
                (D61, &k1),
                (D66, &k6),
                (D67, &k7),
                (D68, &k8),
                (D69, &k9),
                (D610, &k10),
                (D611, &k11),
                (D612, &k12),
            ]);
            let mut cont8 = combo(&[
                (D71, &k1),
                (D76, &k6),
                (D77, &k7),
                (D78, &k8),
                (D79, &k9),
                (D710, &k10),
                (D711, &k11),
                (D712, &k12),
            ]);
            let k14 = eval(
                t + C14 * h,
                &axpy_list(
                    &y,
                    h,
                    &[
                        (A141, &k1),
                        (A147, &k7),
                        (A148, &k8),
                        (A149, &k9),
                        (A1410, &k10),
                        (A1411, &k11),
                        (A1412, &k12),
                        (A1413, &k13),
                    ],
                ),
            );
            let k15 = eval(
                t + C15 * h,
                &axpy_list(
                    &y,
                    h,
                    &[
                        (A151, &k1),
                        (A156, &k6),
                        (A157, &k7),
                        (A158, &k8),
                        (A1511, &k11),
                        (A1512, &k12),
                        (A1513, &k13),
                        (A1514, &k14),
                    ],
                ),
            );
            let k16 = eval(
                t + C16 * h,
                &axpy_list(
                    &y,
                    h,
                    &[
                        (A161, &k1),
                        (A166, &k6),
                        (A167, &k7),
                        (A168, &k8),
                        (A169, &k9),
                        (A1613, &k13),
                        (A1614, &k14),
                        (A1615, &k15),
                    ],
                ),
            );
            stats.evals += 3;
            for (c, d) in [
                (&mut cont5, [D413, D414, D415, D416]),
                (&mut cont6, [D513, D514, D515, D516]),
                (&mut cont7, [D613, D614, D615, D616]),
                (&mut cont8, [D713, D714, D715, D716]),
            ] {
                for i in 0..n {
                    c[i] = h * (c[i] + d[0] * k13[i] + d[1] * k14[i] + d[2] * k15[i] + d[3] * k16[i]);
                }
            }
            let seg = Segment {
                t0: t,
                h,
                y0: y.clone(),
                y1: y_new.clone(),
                local_error: err_abs,
                cont: [y.clone(), ydiff, cont3, cont4, cont5, cont6, cont7, cont8],
            };
            let stop = observer(&seg);
            if keep_dense {
                segments.push(seg);
            }
            t = if last { t_end } else { t_new };
            y = y_new;
            k1 = k13;
            if stop || last {
                return Ok(OdeSolution {
                    t,
                    y,
                    stats,
                    stopped: stop && !last,
                    segments,
                });
            }
            if last_rejected {
                h_new = dir * h_new.abs().min(h.abs());
                last_rejected = false;
            }
        } else {
            h_new = h / facc1.min(fac11 / safe);
            last_rejected = true;
            stats.rejected += 1;
        }
        h = dir * h_new.abs().min(opts.h_max);
    }
}

/// Brent's method on a bracket with `fa·fb ≤ 0`.
pub fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    tol: f64,
) -> f64 {
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    debug_assert!(fa * fb < 0.0, "root not bracketed");
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    b
}

// Dormand–Prince 8(5,3) coefficients (Hairer & Wanner, DOP853)
const A21: f64 = 5.26001519587677318785587544488E-2;
const A31: f64 = 1.97250569845378994544595329183E-2;
const A32: f64 = 5.91751709536136983633785987549E-2;
const A41: f64 = 2.95875854768068491816892993775E-2;
const A43: f64 = 8.87627564304205475450678981324E-2;
const A51: f64 = 2.41365134159266685502369798665E-1;
const A53: f64 = -8.84549479328286085344864962717E-1;
const A54: f64 = 9.24834003261792003115737966543E-1;
const A61: f64 = 3.7037037037037037037037037037E-2;
const A64: f64 = 1.70828608729473871279604482173E-1;
const A65: f64 = 1.25467687566822425016691814123E-1;
const A71: f64 = 3.7109375E-2;
const A74: f64 = 1.70252211019544039314978060272E-1;
const A75: f64 = 6.02165389804559606850219397283E-2;
const A76: f64 = -1.7578125E-2;
const A81: f64 = 3.70920001185047927108779319836E-2;
const A84: f64 = 1.70383925712239993810214054705E-1;
const A85: f64 = 1.07262030446373284651809199168E-1;
const A86: f64 = -1.53194377486244017527936158236E-2;
const A87: f64 = 8.27378916381402288758473766002E-3;
const A91: f64 = 6.24110958716075717114429577812E-1;
const A94: f64 = -3.36089262944694129406857109825E0;
const A95: f64 = -8.68219346841726006818189891453E-1;
const A96: f64 = 2.75920996994467083049415600797E1;
const A97: f64 = 2.01540675504778934086186788979E1;
const A98: f64 = -4.34898841810699588477366255144E1;
const A101: f64 = 4.77662536438264365890433908527E-1;
const A104: f64 = -2.48811461997166764192642586468E0;
const A105: f64 = -5.90290826836842996371446475743E-1;
const A106: f64 = 2.12300514481811942347288949897E1;
const A107: f64 = 1.52792336328824235832596922938E1;
const A108: f64 = -3.32882109689848629194453265587E1;
const A109: f64 = -2.03312017085086261358222928593E-2;
const A111: f64 = -9.3714243008598732571704021658E-1;
const A114: f64 = 5.18637242884406370830023853209E0;
const A115: f64 = 1.09143734899672957818500254654E0;
const A116: f64 = -8.14978701074692612513997267357E0;
const A117: f64 = -1.85200656599969598641566180701E1;
const A118: f64 = 2.27394870993505042818970056734E1;
const A119: f64 = 2.49360555267965238987089396762E0;
const A1110: f64 = -3.0467644718982195003823669022E0;
const A121: f64 = 2.27331014751653820792359768449E0;
const A124: f64 = -1.05344954667372501984066689879E1;
const A125: f64 = -2.00087205822486249909675718444E0;
const A126: f64 = -1.79589318631187989172765950534E1;
const A127: f64 = 2.79488845294199600508499808837E1;
const A128: f64 = -2.85899827713502369474065508674E0;
const A129: f64 = -8.87285693353062954433549289258E0;
const A1210: f64 = 1.23605671757943030647266201528E1;
const A1211: f64 = 6.43392746015763530355970484046E-1;
const A141: f64 = 5.61675022830479523392909219681E-2;
const A147: f64 = 2.53500210216624811088794765333E-1;
const A148: f64 = -2.46239037470802489917441475441E-1;
const A149: f64 = -1.24191423263816360469010140626E-1;
const A1410: f64 = 1.5329179827876569731206322685E-1;
const A1411: f64 = 8.20105229563468988491666602057E-3;
const A1412: f64 = 7.56789766054569976138603589584E-3;
const A1413: f64 = -8.298E-3;
const A151: f64 = 3.18346481635021405060768473261E-2;
const A156: f64 = 2.83009096723667755288322961402E-2;
const A157: f64 = 5.35419883074385676223797384372E-2;
const A158: f64 = -5.49237485713909884646569340306E-2;
const A1511: f64 = -1.08347328697249322858509316994E-4;
const A1512: f64 = 3.82571090835658412954920192323E-4;
const A1513: f64 = -3.40465008687404560802977114492E-4;
const A1514: f64 = 1.41312443674632500278074618366E-1;
const A161: f64 = -4.28896301583791923408573538692E-1;
const A166: f64 = -4.69762141536116384314449447206E0;
const A167: f64 = 7.68342119606259904184240953878E0;
const A168: f64 = 4.06898981839711007970213554331E0;
const A169: f64 = 3.56727187455281109270669543021E-1;
const A1613: f64 = -1.39902416515901462129418009734E-3;
const A1614: f64 = 2.9475147891527723389556272149E0;
const A1615: f64 = -9.15095847217987001081870187138E0;
const B1: f64 = 5.42937341165687622380535766363E-2;
const B6: f64 = 4.45031289275240888144113950566E0;
const B7: f64 = 1.89151789931450038304281599044E0;
const B8: f64 = -5.8012039600105847814672114227E0;
const B9: f64 = 3.1116436695781989440891606237E-1;
const B10: f64 = -1.52160949662516078556178806805E-1;
const B11: f64 = 2.01365400804030348374776537501E-1;
const B12: f64 = 4.47106157277725905176885569043E-2;
const BHH1: f64 = 0.244094488188976377952755905512E+00;
const BHH2: f64 = 0.733846688281611857341361741547E+00;
const BHH3: f64 = 0.220588235294117647058823529412E-01;
const C2: f64 = 0.526001519587677318785587544488E-01;
const C3: f64 = 0.789002279381515978178381316732E-01;
const C4: f64 = 0.118350341907227396726757197510E+00;
const C5: f64 = 0.281649658092772603273242802490E+00;
const C6: f64 = 0.333333333333333333333333333333E+00;
const C7: f64 = 0.25E+00;
const C8: f64 = 0.307692307692307692307692307692E+00;
const C9: f64 = 0.651282051282051282051282051282E+00;
const C10: f64 = 0.6E+00;
const C11: f64 = 0.857142857142857142857142857142E+00;
const C14: f64 = 0.1E+00;
const C15: f64 = 0.2E+00;
const C16: f64 = 0.777777777777777777777777777778E+00;
const ER1: f64 = 0.1312004499419488073250102996E-01;
const ER6: f64 = -0.1225156446376204440720569753E+01;
const ER7: f64 = -0.4957589496572501915214079952E+00;
const ER8: f64 = 0.1664377182454986536961530415E+01;
const ER9: f64 = -0.3503288487499736816886487290E+00;
const ER10: f64 = 0.3341791187130174790297318841E+00;
const ER11: f64 = 0.8192320648511571246570742613E-01;
const ER12: f64 = -0.2235530786388629525884427845E-01;
const D41: f64 = -0.84289382761090128651353491142E+01;
const D46: f64 = 0.56671495351937776962531783590E+00;
const D47: f64 = -0.30689499459498916912797304727E+01;
const D48: f64 = 0.23846676565120698287728149680E+01;
const D49: f64 = 0.21170345824450282767155149946E+01;
const D410: f64 = -0.87139158377797299206789907490E+00;
const D411: f64 = 0.22404374302607882758541771650E+01;
const D412: f64 = 0.63157877876946881815570249290E+00;
const D413: f64 = -0.88990336451333310820698117400E-01;
const D414: f64 = 0.18148505520854727256656404962E+02;
const D415: f64 = -0.91946323924783554000451984436E+01;
const D416: f64 = -0.44360363875948939664310572000E+01;
const D51: f64 = 0.10427508642579134603413151009E+02;
const D56: f64 = 0.24228349177525818288430175319E+03;
const D57: f64 = 0.16520045171727028198505394887E+03;
const D58: f64 = -0.37454675472269020279518312152E+03;
const D59: f64 = -0.22113666853125306036270938578E+02;
const D510: f64 = 0.77334326684722638389603898808E+01;
const D511: f64 = -0.30674084731089398182061213626E+02;
const D512: f64 = -0.93321305264302278729567221706E+01;
const D513: f64 = 0.15697238121770843886131091075E+02;
const D514: f64 = -0.31139403219565177677282850411E+02;
const D515: f64 = -0.93529243588444783865713862664E+01;
const D516: f64 = 0.35816841486394083752465898540E+02;
const D61: f64 = 0.19985053242002433820987653617E+02;
const D66: f64 = -0.38703730874935176555105901742E+03;
const D67: f64 = -0.18917813819516756882830838328E+03;
const D68: f64 = 0.52780815920542364900561016686E+03;
const D69: f64 = -0.11573902539959630126141871134E+02;
const D610: f64 = 0.68812326946963000169666922661E+01;
const D611: f64 = -0.10006050966910838403183860980E+01;
const D612: f64 = 0.77771377980534432092869265740E+00;
const D613: f64 = -0.27782057523535084065932004339E+01;
const D614: f64 = -0.60196695231264120758267380846E+02;
const D615: f64 = 0.84320405506677161018159903784E+02;
const D616: f64 = 0.11992291136182789328035130030E+02;
const D71: f64 = -0.25693933462703749003312586129E+02;
const D76: f64 = -0.15418974869023643374053993627E+03;
const D77: f64 = -0.23152937917604549567536039109E+03;
const D78: f64 = 0.35763911791061412378285349910E+03;
const D79: f64 = 0.93405324183624310003907691704E+02;
const D710: f64 = -0.37458323136451633156875139351E+02;
const D711: f64 = 0.10409964950896230045147246184E+03;
const D712: f64 = 0.29840293426660503123344363579E+02;
const D713: f64 = -0.43533456590011143754432175058E+02;
const D714: f64 = 0.96324553959188282948394950600E+02;
const D715: f64 = -0.39177261675615439165231486172E+02;
const D716: f64 = -0.14972683625798562581422125276E+03;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let sol = solve(
            |_, y, d| d[0] = y[0],
            0.0,
            &[1.0],
            1.0,
            &OdeOptions::default(),
            true,
            |_| false,
        )
        .unwrap();
        assert!((sol.y[0] - std::f64::consts::E).abs() < 1e-10);
        // the interpolant is one order below the step, so a bit looser
        let mid = sol.eval(0.37).unwrap();
        assert!((mid[0] - 0.37f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn backward_in_time() {
        let sol = solve(
            |_, y, d| {
                d[0] = y[1];
                d[1] = -y[0];
            },
            0.0,
            &[0.0, 1.0],
            -2.0,
            &OdeOptions::default(),
            true,
            |_| false,
        )
        .unwrap();
        assert!((sol.y[0] - (-2f64).sin()).abs() < 1e-9);
        let v = sol.eval(-1.3).unwrap();
        assert!((v[1] - 1.3f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn observer_stops_early() {
        let sol = solve(
            |_, y, d| d[0] = y[0],
            0.0,
            &[1.0],
            10.0,
            &OdeOptions::default(),
            false,
            |seg| seg.y1[0] > 5.0,
        )
        .unwrap();
        assert!(sol.stopped);
        assert!(sol.t < 10.0 && sol.y[0] > 5.0);
    }

    #[test]
    fn dense_output_is_seventh_order() {
        // one forced step of size h: interpolation error should fall like h^8
        let run = |h: f64| {
            let opts = OdeOptions {
                rtol: 1.0,
                atol: 1.0,
                h_max: h,
                max_steps: 10,
            };
            let sol = solve(|_, y, d| d[0] = y[0] * y[0], 0.0, &[1.0], h, &opts, true, |_| false)
                .unwrap();
            let t = 0.5 * h;
            (sol.segments[0].eval(t)[0] - 1.0 / (1.0 - t)).abs()
        };
        let (e1, e2) = (run(0.2), run(0.1));
        assert!(e1 / e2 > 100.0, "{e1:e} {e2:e}");
    }

    #[test]
    fn brent_finds_root() {
        let r = brent(|x| x * x - 2.0, 0.0, 2.0, -2.0, 2.0, 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        let r = brent(|x: f64| x.cos() - x, 0.0, 1.0, 1.0, 1f64.cos() - 1.0, 1e-15);
        assert!((r.cos() - r).abs() < 1e-14);
    }
}
