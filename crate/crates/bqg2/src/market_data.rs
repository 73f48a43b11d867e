//! CMT yield panel ingestion and zero-curve bootstrap.
//!
//! Input files are delimited text panels of constant-maturity Treasury par
//! yields (percent, one column per tenor, missing cells "." or empty). Each
//! dated row is bootstrapped into a continuously-compounded zero curve:
//! tenors up to one year are simple zero-coupon quotes
//!
//! ```text
//! P(0, tau) = 1 / (1 + y tau),
//! ```
//!
//! tenors of two years and beyond are semiannual par bond yields
//!
//! ```text
//! 1 = (y/2) sum_i P(0, t_i) + P(0, tau),   t_i = 0.5, 1.0, ..., tau,
//! ```
//!
//! and a natural cubic spline on the log-discount interpolates between
//! bootstrap knots. The coupled knot system is solved by repeated sweeps
//! until repricing reproduces the inputs to 0.1 bp.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math::CubicSpline;

/// The standard CMT tenor set, in years.
pub const CMT_TENORS: [f64; 11] = [
    1.0 / 12.0,
    0.25,
    0.5,
    1.0,
    2.0,
    3.0,
    5.0,
    7.0,
    10.0,
    20.0,
    30.0,
];

/// Par yields above this tenor are treated as semiannual coupon bonds;
/// at or below it, as simple zero-coupon quotes.
const MONEY_MARKET_CUTOFF: f64 = 1.0 + 1e-9;

/// Panel of dated CMT par yield observations. `yields[r][c]` is the decimal
/// par yield for `dates[r]` and `maturities[c]`, or `None` when absent.
#[derive(Debug, Clone)]
pub struct CmtPanel {
    pub dates: Vec<NaiveDate>,
    pub maturities: Vec<f64>,
    pub yields: Vec<Vec<Option<f64>>>,
}

impl CmtPanel {
    pub fn validate(&self) -> Result<()> {
        if self.dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("panel dates must be strictly increasing"));
        }
        if self.maturities.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("panel maturities must be strictly increasing"));
        }
        for (r, row) in self.yields.iter().enumerate() {
            if row.len() != self.maturities.len() {
                return Err(Error::input(format!("row {r} has wrong width")));
            }
            for y in row.iter().flatten() {
                if !(-0.05..=0.50).contains(y) {
                    return Err(Error::input(format!(
                        "yield {y} on {} outside [-0.05, 0.50]",
                        self.dates[r]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Bootstrapped zero curve for one observation date.
///
/// `zero_yields` are continuously compounded; `tenors` carry an implicit
/// leading knot at zero where the discount factor is one.
#[derive(Debug, Clone)]
pub struct ZeroCurve {
    pub date: NaiveDate,
    pub tenors: Vec<f64>,
    pub zero_yields: Vec<f64>,
    spline: CubicSpline,
}

impl ZeroCurve {
    /// Build from tenor/zero-yield pairs, re-deriving the log-discount
    /// spline. Used both by the bootstrap and when reloading saved curves.
    pub fn new(date: NaiveDate, tenors: Vec<f64>, zero_yields: Vec<f64>) -> Result<ZeroCurve> {
        if tenors.len() != zero_yields.len() || tenors.is_empty() {
            return Err(Error::input("curve needs matching non-empty tenor and yield lists"));
        }
        if tenors[0] <= 0.0 || tenors.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("curve tenors must be positive and strictly increasing"));
        }
        let mut xs = vec![0.0];
        let mut ys = vec![0.0];
        for (t, z) in tenors.iter().zip(&zero_yields) {
            let p = (-z * t).exp();
            if !(p > 0.0 && p <= 1.05) {
                return Err(Error::input(format!(
                    "discount factor {p} at tenor {t} outside (0, 1.05]"
                )));
            }
            xs.push(*t);
            ys.push(-z * t);
        }
        let spline = CubicSpline::natural(&xs, &ys)?;
        Ok(ZeroCurve {
            date,
            tenors,
            zero_yields,
            spline,
        })
    }

    /// Discount factor `P(0, tau)` from the log-discount spline.
    pub fn discount(&self, tau: f64) -> Result<f64> {
        if tau < 0.0 || tau > self.spline.x_max() + 1e-12 {
            return Err(Error::domain(format!(
                "tenor {tau} outside curve range [0, {}]",
                self.spline.x_max()
            )));
        }
        let p = self.spline.eval(tau.max(0.0))?.exp();
        if p <= 0.0 {
            return Err(Error::numerics(format!("negative implied discount at tenor {tau}")));
        }
        Ok(p)
    }

    /// Continuously compounded zero yield at `tau > 0`.
    pub fn zero_yield(&self, tau: f64) -> Result<f64> {
        if tau <= 0.0 {
            return Err(Error::domain("zero yield needs a positive tenor"));
        }
        Ok(-self.discount(tau)?.ln() / tau)
    }

    /// Par yield implied by the curve under the quoting convention used at
    /// ingestion: simple yield at or below one year, semiannual par coupon
    /// beyond.
    pub fn implied_par_yield(&self, tau: f64) -> Result<f64> {
        let p = self.discount(tau)?;
        if tau <= MONEY_MARKET_CUTOFF {
            Ok((1.0 / p - 1.0) / tau)
        } else {
            let mut annuity = 0.0;
            let n = (tau * 2.0).round() as usize;
            for k in 1..=n {
                annuity += self.discount(0.5 * k as f64)?;
            }
            Ok(2.0 * (1.0 - p) / annuity)
        }
    }
}

/// Parse a delimited CMT panel (comma or tab), percent units, header row
/// with tenor labels such as `1MO`, `3MO`, `6MO`, `1`, ..., `30`.
pub fn parse_cmt_csv<R: std::io::Read>(source: R) -> Result<CmtPanel> {
    let mut raw = String::new();
    let mut rdr = source;
    rdr.read_to_string(&mut raw)?;
    let delim = if raw.lines().next().map_or(false, |l| l.contains('\t')) {
        b'\t'
    } else {
        b','
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .trim(csv::Trim::All)
        .from_reader(raw.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::input(format!("bad header row: {e}")))?
        .clone();
    if headers.len() < 2 {
        return Err(Error::input("header must contain a date column and tenor columns"));
    }
    let mut maturities = Vec::new();
    for label in headers.iter().skip(1) {
        maturities.push(parse_tenor_label(label)?);
    }
    if maturities.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::input("header tenors must be strictly increasing"));
    }

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut yields = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 2; // 1-based, counting the header
        let record = record.map_err(|e| Error::input(format!("row {row_no}: {e}")))?;
        if record.len() != maturities.len() + 1 {
            return Err(Error::input(format!(
                "row {row_no}: expected {} fields, found {}",
                maturities.len() + 1,
                record.len()
            )));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| Error::input(format!("row {row_no}: malformed date '{}': {e}", &record[0])))?;
        if let Some(&prev) = dates.last() {
            if date == prev {
                return Err(Error::input(format!("row {row_no}: duplicate date {date}")));
            }
            if date < prev {
                return Err(Error::input(format!(
                    "row {row_no}: dates out of order ({prev} followed by {date})"
                )));
            }
        }
        let mut row = Vec::with_capacity(maturities.len());
        for (c, cell) in record.iter().skip(1).enumerate() {
            if cell.is_empty() || cell == "." {
                row.push(None);
            } else {
                let pct: f64 = cell.parse().map_err(|_| {
                    Error::input(format!(
                        "row {row_no}: non-numeric yield '{cell}' in column {}",
                        headers.get(c + 1).unwrap_or("?")
                    ))
                })?;
                row.push(Some(pct / 100.0));
            }
        }
        dates.push(date);
        yields.push(row);
    }
    let panel = CmtPanel {
        dates,
        maturities,
        yields,
    };
    panel.validate()?;
    Ok(panel)
}

fn parse_tenor_label(label: &str) -> Result<f64> {
    let up = label.to_ascii_uppercase();
    if let Some(months) = up.strip_suffix("MO") {
        let m: f64 = months
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("bad tenor label '{label}'")))?;
        return Ok(m / 12.0);
    }
    let stripped = up.strip_suffix("YR").or_else(|| up.strip_suffix('Y')).unwrap_or(&up);
    stripped
        .trim()
        .parse()
        .map_err(|_| Error::input(format!("bad tenor label '{label}'")))
}

/// Bootstrap one dated row of par yields into a zero curve.
///
/// Absent tenors are dropped; fewer than four present quotes is an error
/// (panel-level drivers treat that as "skip this date").
pub fn bootstrap_zero_curve(
    date: NaiveDate,
    maturities: &[f64],
    par: &[Option<f64>],
) -> Result<ZeroCurve> {
    if maturities.len() != par.len() {
        return Err(Error::input("tenor and yield lists differ in length"));
    }
    let mut tenors = Vec::new();
    let mut quotes = Vec::new();
    for (t, y) in maturities.iter().zip(par) {
        if let Some(y) = y {
            tenors.push(*t);
            quotes.push(*y);
        }
    }
    if tenors.len() < 4 {
        return Err(Error::input(format!(
            "{date}: only {} present tenors, need at least 4",
            tenors.len()
        )));
    }
    if *tenors.last().unwrap() > 30.0 + 1e-9 {
        return Err(Error::input(format!("{date}: tenor beyond 30y not supported")));
    }

    // Money-market quotes pin their knots in closed form.
    let mut log_disc: Vec<f64> = tenors
        .iter()
        .zip(&quotes)
        .map(|(&t, &y)| {
            if t <= MONEY_MARKET_CUTOFF {
                -(1.0 + y * t).ln()
            } else {
                // start coupon knots at the continuously compounded par level
                -y * t
            }
        })
        .collect();

    // Solve the coupled par equations at the coupon knots by a damped
    // Newton iteration in the knot log-discounts. The spline ties every
    // knot into every coupon annuity, so plain knot-by-knot substitution
    // diverges on steep curves; the full Jacobian (at most 7x7) is cheap.
    let free: Vec<usize> = tenors
        .iter()
        .enumerate()
        .filter(|(_, &t)| t > MONEY_MARKET_CUTOFF)
        .map(|(k, _)| k)
        .collect();
    if !free.is_empty() {
        let residual = |ld: &[f64]| -> Result<DVector<f64>> {
            let curve = curve_from_log_disc(date, &tenors, ld)?;
            let mut r = DVector::zeros(free.len());
            for (row, &k) in free.iter().enumerate() {
                let c = quotes[k] / 2.0;
                let n = (tenors[k] * 2.0).round() as usize;
                let mut pv = (1.0 + c) * curve.discount(tenors[k])?;
                for i in 1..n {
                    pv += c * curve.discount(0.5 * i as f64)?;
                }
                r[row] = pv - 1.0;
            }
            Ok(r)
        };
        let mut r = residual(&log_disc)
            .map_err(|e| Error::numerics(format!("{date}: infeasible par inputs: {e}")))?;
        'newton: for _ in 0..60 {
            if r.amax() < 1e-12 {
                break;
            }
            let mut jac = DMatrix::zeros(free.len(), free.len());
            for (col, &k) in free.iter().enumerate() {
                let bump = 1e-6;
                let mut ld = log_disc.clone();
                ld[k] += bump;
                let rb = residual(&ld)?;
                for row in 0..free.len() {
                    jac[(row, col)] = (rb[row] - r[row]) / bump;
                }
            }
            let delta = jac
                .lu()
                .solve(&(-&r))
                .ok_or_else(|| Error::numerics(format!("{date}: singular bootstrap Jacobian")))?;
            let mut scale = 1.0;
            let norm0 = r.norm();
            loop {
                let mut trial = log_disc.clone();
                for (col, &k) in free.iter().enumerate() {
                    trial[k] += scale * delta[col];
                }
                match residual(&trial) {
                    Ok(rt) if rt.norm() < norm0 => {
                        log_disc = trial;
                        r = rt;
                        break;
                    }
                    _ => {
                        scale *= 0.5;
                        if scale < 1e-6 {
                            break 'newton;
                        }
                    }
                }
            }
        }
        if r.amax() >= 1e-10 {
            // An irreducible positive residual (a bond still overpriced as
            // its discount knot collapses) means the par system admits no
            // positive discount solution.
            let infeasible = free.iter().any(|&k| log_disc[k] < -15.0)
                || r.iter().any(|&v| v > 1e-10);
            if infeasible {
                return Err(Error::numerics(format!(
                    "{date}: negative implied discount factor"
                )));
            }
            return Err(Error::numerics(format!("{date}: bootstrap did not converge")));
        }
    }

    let curve = curve_from_log_disc(date, &tenors, &log_disc)?;
    for (&t, &y) in tenors.iter().zip(&quotes) {
        let back = curve.implied_par_yield(t)?;
        if (back - y).abs() > 1e-5 {
            return Err(Error::numerics(format!(
                "{date}: round-trip par yield at tenor {t} off by {:.3e}",
                back - y
            )));
        }
    }
    Ok(curve)
}

fn curve_from_log_disc(date: NaiveDate, tenors: &[f64], log_disc: &[f64]) -> Result<ZeroCurve> {
    let zero_yields: Vec<f64> = tenors
        .iter()
        .zip(log_disc)
        .map(|(&t, &ld)| -ld / t)
        .collect();
    ZeroCurve::new(date, tenors.to_vec(), zero_yields)
}

/// Bootstrap every row of a panel, skipping rows with fewer than four
/// present quotes. Returns the curves and the skipped dates with reasons.
pub fn bootstrap_panel(panel: &CmtPanel) -> Result<(Vec<ZeroCurve>, Vec<(NaiveDate, String)>)> {
    panel.validate()?;
    let mut curves = Vec::with_capacity(panel.dates.len());
    let mut skipped = Vec::new();
    for (date, row) in panel.dates.iter().zip(&panel.yields) {
        let present = row.iter().flatten().count();
        if present < 4 {
            skipped.push((*date, format!("only {present} present tenors")));
            continue;
        }
        curves.push(bootstrap_zero_curve(*date, &panel.maturities, row)?);
    }
    Ok((curves, skipped))
}

/// Gross holding period return of a zero-coupon bond: buy the
/// `bond_maturity` bond at the first date, sell it one `horizon` later off
/// the second curve.
pub fn holding_return(
    curve_t: &ZeroCurve,
    curve_next: &ZeroCurve,
    bond_maturity: f64,
    horizon: f64,
) -> Result<f64> {
    if bond_maturity < horizon {
        return Err(Error::input(format!(
            "bond maturity {bond_maturity} shorter than holding horizon {horizon}"
        )));
    }
    let p_buy = curve_t.discount(bond_maturity)?;
    let p_sell = curve_next.discount(bond_maturity - horizon)?;
    Ok(p_sell / p_buy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn parses_missing_cells_and_percent_units() {
        let csv = "DATE,1MO,3MO,6MO,1,2,3,5,7,10,20,30\n\
                   1993-10-01,.,3.10,3.25,3.40,3.90,4.15,4.70,5.00,5.30,6.00,6.20\n\
                   1993-10-04,3.05,3.11,,3.41,3.91,4.16,4.71,5.01,5.31,6.01,6.21\n";
        let panel = parse_cmt_csv(csv.as_bytes()).unwrap();
        assert_eq!(panel.dates.len(), 2);
        assert_eq!(panel.maturities.len(), 11);
        assert_relative_eq!(panel.maturities[0], 1.0 / 12.0);
        assert!(panel.yields[0][0].is_none());
        assert_relative_eq!(panel.yields[0][1].unwrap(), 0.0310);
        assert!(panel.yields[1][2].is_none());
        assert_relative_eq!(panel.yields[1][10].unwrap(), 0.0621);
    }

    #[test]
    fn rejects_bad_rows_with_row_numbers() {
        let out_of_order = "DATE,1,2,3,5\n\
                            1994-01-03,4.0,4.2,4.4,4.8\n\
                            1993-12-31,4.0,4.2,4.4,4.8\n";
        let err = parse_cmt_csv(out_of_order.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
        assert!(err.contains("1994-01-03") && err.contains("1993-12-31"), "{err}");

        let dup = "DATE,1,2,3,5\n\
                   1994-01-03,4.0,4.2,4.4,4.8\n\
                   1994-01-03,4.1,4.2,4.4,4.8\n";
        let err = parse_cmt_csv(dup.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("duplicate") && err.contains("row 3"), "{err}");

        let junk = "DATE,1,2,3,5\n1994-01-03,4.0,x,4.4,4.8\n";
        let err = parse_cmt_csv(junk.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("non-numeric") && err.contains("row 2"), "{err}");

        let bad_date = "DATE,1,2,3,5\n03-01-1994,4.0,4.1,4.4,4.8\n";
        let err = parse_cmt_csv(bad_date.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("malformed date"), "{err}");
    }

    #[test]
    fn flat_zero_par_curve_bootstraps_to_zero() {
        let tenors = [0.25, 0.5, 1.0, 2.0, 5.0, 10.0];
        let par: Vec<Option<f64>> = tenors.iter().map(|_| Some(0.0)).collect();
        let curve = bootstrap_zero_curve(d("2000-01-03"), &tenors, &par).unwrap();
        for t in [0.1, 0.25, 1.0, 3.3, 7.0, 10.0] {
            assert_relative_eq!(curve.discount(t).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn money_market_quotes_are_simple_yields() {
        let tenors = [1.0 / 12.0, 0.25, 0.5, 1.0];
        let par = [Some(0.03), Some(0.032), Some(0.034), Some(0.036)];
        let curve = bootstrap_zero_curve(d("2000-01-03"), &tenors, &par).unwrap();
        // P = 1/(1 + y tau) exactly at money-market knots
        assert_relative_eq!(
            curve.discount(1.0).unwrap(),
            1.0 / (1.0 + 0.036),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            curve.discount(0.25).unwrap(),
            1.0 / (1.0 + 0.032 * 0.25),
            epsilon = 1e-12
        );
    }

    #[test]
    fn two_step_coupon_bootstrap_matches_hand_solution() {
        // 1y simple quote pins P(1); the 2y semiannual par equation then
        // determines P(2) given spline values at 0.5 and 1.5. With knots at
        // 0, 1, 2 the converged spline is checked against the par equation
        // directly.
        let tenors = [0.25, 0.5, 1.0, 2.0];
        let par = [Some(0.018), Some(0.019), Some(0.02), Some(0.03)];
        let curve = bootstrap_zero_curve(d("2001-06-01"), &tenors, &par).unwrap();
        let p1 = curve.discount(1.0).unwrap();
        assert_relative_eq!(p1, 1.0 / 1.02, epsilon = 1e-12);
        let c = 0.015;
        let lhs = c
            * (curve.discount(0.5).unwrap()
                + curve.discount(1.0).unwrap()
                + curve.discount(1.5).unwrap())
            + (1.0 + c) * curve.discount(2.0).unwrap();
        assert_relative_eq!(lhs, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn round_trip_reprices_par_inputs() {
        let tenors = CMT_TENORS;
        let par: Vec<Option<f64>> = [
            0.0301, 0.0312, 0.0330, 0.0352, 0.0390, 0.0415, 0.0470, 0.0501, 0.0530, 0.0601,
            0.0618,
        ]
        .iter()
        .map(|&y| Some(y))
        .collect();
        let curve = bootstrap_zero_curve(d("1995-03-01"), &tenors, &par).unwrap();
        for (t, y) in tenors.iter().zip(par.iter().map(|y| y.unwrap())) {
            let back = curve.implied_par_yield(*t).unwrap();
            assert!((back - y).abs() < 1e-5, "tenor {t}: {back} vs {y}");
        }
    }

    #[test]
    fn sparse_rows_are_skipped_not_fatal() {
        let csv = "DATE,1MO,3MO,6MO,1,2\n\
                   2001-01-02,3.0,3.1,3.2,3.3,3.6\n\
                   2001-01-03,.,.,.,.,.\n\
                   2001-01-04,3.0,3.1,.,.,.\n\
                   2001-01-05,3.0,3.1,3.2,3.3,3.7\n";
        let panel = parse_cmt_csv(csv.as_bytes()).unwrap();
        let (curves, skipped) = bootstrap_panel(&panel).unwrap();
        assert_eq!(curves.len(), 2);
        assert_eq!(skipped.len(), 2);
        assert_eq!(skipped[0].0, d("2001-01-03"));
        assert!(skipped[1].1.contains("2 present tenors"));
    }

    #[test]
    fn holding_return_flat_curves() {
        let tenors = vec![0.25, 1.0, 2.0, 5.0, 10.0, 30.0];
        let flat = |date: NaiveDate, y: f64| {
            ZeroCurve::new(date, tenors.clone(), tenors.iter().map(|_| y).collect()).unwrap()
        };
        let a = flat(d("2005-01-03"), 0.04);
        let b = flat(d("2005-04-01"), 0.04);
        let r = holding_return(&a, &b, 10.0, 0.25).unwrap();
        assert_relative_eq!(r, (0.04f64 * 0.25).exp(), epsilon = 1e-10);

        let z = flat(d("2005-01-03"), 0.0);
        let z2 = flat(d("2005-04-01"), 0.0);
        assert_relative_eq!(holding_return(&z, &z2, 7.0, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn maturing_bond_earns_risk_free_return() {
        let tenors = vec![0.25, 0.5, 1.0, 2.0, 5.0];
        let ys = vec![0.02, 0.022, 0.025, 0.03, 0.035];
        let a = ZeroCurve::new(d("2005-01-03"), tenors.clone(), ys.clone()).unwrap();
        let b = ZeroCurve::new(d("2005-07-01"), tenors, ys).unwrap();
        let r = holding_return(&a, &b, 0.5, 0.5).unwrap();
        assert_relative_eq!(r, 1.0 / a.discount(0.5).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn holding_return_is_multiplicative() {
        let tenors = vec![0.25, 0.5, 1.0, 2.0, 5.0, 10.0];
        let mk = |date: &str, bump: f64| {
            ZeroCurve::new(
                d(date),
                tenors.clone(),
                tenors.iter().map(|t| 0.03 + 0.002 * t.ln() + bump).collect(),
            )
            .unwrap()
        };
        let c0 = mk("2006-01-03", 0.0);
        let c1 = mk("2006-04-03", 0.001);
        let c2 = mk("2006-07-03", -0.0005);
        let whole = holding_return(&c0, &c2, 8.0, 0.5).unwrap();
        let split = holding_return(&c0, &c1, 8.0, 0.25).unwrap()
            * holding_return(&c1, &c2, 7.75, 0.25).unwrap();
        assert_relative_eq!(whole, split, epsilon = 1e-12);
    }

    #[test]
    fn dropping_money_market_column_barely_moves_long_tenors() {
        let par_full: Vec<Option<f64>> = vec![
            Some(0.030),
            Some(0.031),
            Some(0.033),
            Some(0.035),
            Some(0.039),
            Some(0.041),
            Some(0.047),
            Some(0.050),
            Some(0.053),
            Some(0.060),
            Some(0.062),
        ];
        let mut par_no_1m = par_full.clone();
        par_no_1m[0] = None;
        let full = bootstrap_zero_curve(d("1997-05-01"), &CMT_TENORS, &par_full).unwrap();
        let trimmed = bootstrap_zero_curve(d("1997-05-01"), &CMT_TENORS, &par_no_1m).unwrap();
        for t in CMT_TENORS.iter().skip(1) {
            let a = full.zero_yield(*t).unwrap();
            let b = trimmed.zero_yield(*t).unwrap();
            assert!((a - b).abs() < 1e-4, "tenor {t}: {a} vs {b}");
        }
    }

    #[test]
    fn curve_rejects_out_of_range_queries() {
        let c = ZeroCurve::new(d("2010-01-04"), vec![1.0, 5.0, 10.0], vec![0.02, 0.03, 0.035])
            .unwrap();
        let err = c.discount(12.0).unwrap_err().to_string();
        assert!(err.contains("12"));
        assert!(c.discount(-0.5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Round-trip property on smooth random par curves.
        #[test]
        fn bootstrap_is_right_inverse_of_par_pricing(
            base in 0.005f64..0.08,
            slope in -0.01f64..0.02,
            curv in -0.004f64..0.004,
        ) {
            let par: Vec<Option<f64>> = CMT_TENORS
                .iter()
                .map(|t| {
                    let y = base + slope * (1.0 + t).ln() + curv * (1.0 + t).ln().powi(2);
                    Some(y.clamp(0.0005, 0.25))
                })
                .collect();
            // Very steep high-level par curves can be genuinely infeasible
            // (the coupon annuity alone exceeds par); those must error, not
            // return a bad curve.
            let curve = match bootstrap_zero_curve(d("2003-03-03"), &CMT_TENORS, &par) {
                Ok(c) => c,
                Err(e) => {
                    let msg = e.to_string();
                    prop_assert!(
                        msg.contains("negative implied discount"),
                        "unexpected bootstrap failure: {}",
                        msg
                    );
                    return Ok(());
                }
            };
            for (t, y) in CMT_TENORS.iter().zip(par.iter().map(|y| y.unwrap())) {
                let back = curve.implied_par_yield(*t).unwrap();
                prop_assert!((back - y).abs() < 1e-5, "tenor {}: {} vs {}", t, back, y);
            }
        }
    }
}
