//! Slow, obviously-correct reference implementations.

/// Levenshtein distance by the textbook recursion, memoized on (i, j).
pub fn edit_distance(x: &str, y: &str) -> usize {
    let a: Vec<char> = x.chars().collect();
    let b: Vec<char> = y.chars().collect();
    let mut memo = vec![None; (a.len() + 1) * (b.len() + 1)];
    rec(&a, &b, a.len(), b.len(), &mut memo)
}

fn rec(a: &[char], b: &[char], i: usize, j: usize, memo: &mut [Option<usize>]) -> usize {
    let key = i * (b.len() + 1) + j;
    if let Some(d) = memo[key] {
        return d;
    }
    let d = if i == 0 {
        j
    } else if j == 0 {
        i
    } else {
        let sub = rec(a, b, i - 1, j - 1, memo) + usize::from(a[i - 1] != b[j - 1]);
        let del = rec(a, b, i - 1, j, memo) + 1;
        let ins = rec(a, b, i, j - 1, memo) + 1;
        sub.min(del).min(ins)
    };
    memo[key] = Some(d);
    d
}

/// Every string over `alphabet` of length at most `max_len`.
pub fn all_strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &c in alphabet {
                let mut t = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + k as f64 * h);
    }
    s * h / 3.0
}

/// Two-tailed Student-t p-value by quadrature. Substituting
/// `s = sqrt(df) tan(theta)` turns the density into `cos^(df-1)(theta)`,
/// which is integrated over the tail and over the whole line.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let f = |theta: f64| theta.cos().max(0.0).powf(df - 1.0);
    let theta0 = (t.abs() / df.sqrt()).atan();
    let n = 200_000;
    let tail = simpson(f, theta0, half_pi, n);
    let total = simpson(f, -half_pi, half_pi, n);
    2.0 * tail / total
}

/// Welch statistic and Satterthwaite degrees of freedom, computed directly.
pub fn welch_t_df(a: &[f64], b: &[f64]) -> (f64, f64) {
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (n, m, var)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let (qa, qb) = (va / na, vb / nb);
    let t = (ma - mb) / (qa + qb).sqrt();
    let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    (t, df)
}
