//! Exhaustive checks of the monotonicity and submodularity properties of
//! solved value tables.
//!
//! Each check walks every feasible tuple for which all referenced states
//! exist and compares table entries with tolerance [`PROPERTY_TOL`]. P5 and
//! P6 are asserted in their inventory-difference form; the alternative
//! sales-difference forms are evaluated and reported but never asserted.

use std::fmt;

use serde::Serialize;

use crate::model::SalesVector;
use crate::solver::ValueTables;

pub const PROPERTY_TOL: f64 = 1e-9;
pub const DEFAULT_COUNTEREXAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Property {
    /// `v(t,d,s) >= v(t,d-1,s)`
    P1,
    /// `v(t,d,s) <= v(t,d,s+e_j)`, `j != n`
    P2,
    /// `v(t,d,s) >= v(t+1,d,s)`
    P3,
    /// `v(t,d,s) - v(t,d-1,s+e_n) >= v(t,d+1,s) - v(t,d,s+e_n)`
    P4,
    /// `v(t,d,s) - v(t,d-1,s+e_n) >= v(t+1,d,s) - v(t+1,d-1,s+e_n)`
    P5,
    /// `v(t,d,s) - v(t,d-1,s+e_n) >= v(t,d,s-e_j) - v(t,d-1,s-e_j+e_n)`
    P6,
    /// `v(t,d,s) - v(t,d,s+e_n) >= v(t+1,d,s) - v(t+1,d,s+e_n)` (not asserted)
    P5Statement,
    /// `v(t,d,s) - v(t,d,s+e_n) >= v(t,d,s-e_j) + v(t,d,s+e_n-e_j)` (not asserted)
    P6Statement,
}

impl Property {
    pub const ALL: [Property; 8] = [
        Property::P1,
        Property::P2,
        Property::P3,
        Property::P4,
        Property::P5,
        Property::P6,
        Property::P5Statement,
        Property::P6Statement,
    ];

    pub fn asserted(self) -> bool {
        !matches!(self, Property::P5Statement | Property::P6Statement)
    }

    pub fn description(self) -> &'static str {
        match self {
            Property::P1 => "monotone in own inventory",
            Property::P2 => "monotone in competitor sales",
            Property::P3 => "monotone in time",
            Property::P4 => "concave in own inventory",
            Property::P5 => "submodular in (t, d), inventory-difference form",
            Property::P6 => "submodular in d, inventory-difference form",
            Property::P5Statement => "submodular in (t, d), sales-difference form",
            Property::P6Statement => "submodular in d, sales-difference form with '+'",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Property::P1 => "P1",
            Property::P2 => "P2",
            Property::P3 => "P3",
            Property::P4 => "P4",
            Property::P5 => "P5",
            Property::P6 => "P6",
            Property::P5Statement => "P5-stmt",
            Property::P6Statement => "P6-stmt",
        };
        f.write_str(name)
    }
}

/// A failing tuple with the values needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    /// 1-based seller number.
    pub seller: usize,
    pub t: u32,
    pub d: u32,
    pub s: Vec<u32>,
    /// 1-based competitor number for P2 and P6.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub other: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs` for `>=` forms; positive means violated.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub property: Property,
    pub asserted: bool,
    pub checked: usize,
    pub violations: usize,
    pub worst_violation: f64,
    pub counterexamples: Vec<Counterexample>,
}

impl PropertyResult {
    fn new(property: Property) -> Self {
        Self {
            property,
            asserted: property.asserted(),
            checked: 0,
            violations: 0,
            worst_violation: 0.0,
            counterexamples: Vec::new(),
        }
    }

    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub instance_hash: String,
    pub results: Vec<PropertyResult>,
}

impl PropertyReport {
    /// Every asserted property has zero violations.
    pub fn passed(&self) -> bool {
        self.results
            .iter()
            .filter(|r| r.asserted)
            .all(|r| r.holds())
    }

    pub fn get(&self, p: Property) -> &PropertyResult {
        self.results
            .iter()
            .find(|r| r.property == p)
            .expect("all properties checked")
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "instance {}",
            &self.instance_hash[..16.min(self.instance_hash.len())]
        )?;
        writeln!(
            f,
            "{:<8} {:<9} {:>9} {:>10} {:>12}  description",
            "property", "asserted", "checked", "violations", "worst"
        )?;
        for r in &self.results {
            writeln!(
                f,
                "{:<8} {:<9} {:>9} {:>10} {:>12.3e}  {}",
                r.property.to_string(),
                if r.asserted { "yes" } else { "no" },
                r.checked,
                r.violations,
                r.worst_violation,
                r.property.description()
            )?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

struct Checker<'a> {
    tables: &'a ValueTables,
    limit: usize,
}

impl Checker<'_> {
    fn v(&self, n: usize, t: u32, d: i64, s: &SalesVector) -> Option<f64> {
        let d = u32::try_from(d).ok()?;
        self.tables.value(n, t, d, s).ok()
    }

    /// Records `lhs >= rhs - tol`.
    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        res: &mut PropertyResult,
        n: usize,
        t: u32,
        d: u32,
        s: &SalesVector,
        other: Option<usize>,
        lhs: f64,
        rhs: f64,
    ) {
        res.checked += 1;
        let gap = rhs - lhs;
        if gap > PROPERTY_TOL {
            res.violations += 1;
            res.worst_violation = res.worst_violation.max(gap);
            if res.counterexamples.len() < self.limit {
                res.counterexamples.push(Counterexample {
                    seller: n + 1,
                    t,
                    d,
                    s: s.as_slice().to_vec(),
                    other: other.map(|j| j + 1),
                    lhs,
                    rhs,
                    violation: gap,
                });
            }
        }
    }

    fn run(&self, property: Property) -> PropertyResult {
        let tables = self.tables;
        let mut res = PropertyResult::new(property);
        let n_sellers = tables.instance().num_sellers();
        let last = tables.horizon() + 1;
        for (key, here, _) in tables.entries() {
            let (n, t, s) = (key.seller, key.period, &key.sales);
            let d = key.remaining as i64;
            let dd = key.remaining;
            let up_n = s.incremented(n);
            match property {
                Property::P1 => {
                    if let Some(lower) = self.v(n, t, d - 1, s) {
                        self.record(&mut res, n, t, dd, s, None, here, lower);
                    }
                }
                Property::P2 => {
                    for j in (0..n_sellers).filter(|&j| j != n) {
                        if let Some(more) = self.v(n, t, d, &s.incremented(j)) {
                            self.record(&mut res, n, t, dd, s, Some(j), more, here);
                        }
                    }
                }
                Property::P3 => {
                    if t < last {
                        if let Some(later) = self.v(n, t + 1, d, s) {
                            self.record(&mut res, n, t, dd, s, None, here, later);
                        }
                    }
                }
                Property::P4 => {
                    let terms = (
                        self.v(n, t, d - 1, &up_n),
                        self.v(n, t, d + 1, s),
                        self.v(n, t, d, &up_n),
                    );
                    if let (Some(a), Some(b), Some(c)) = terms {
                        self.record(&mut res, n, t, dd, s, None, here - a, b - c);
                    }
                }
                Property::P5 => {
                    if t < last {
                        let terms = (
                            self.v(n, t, d - 1, &up_n),
                            self.v(n, t + 1, d, s),
                            self.v(n, t + 1, d - 1, &up_n),
                        );
                        if let (Some(a), Some(b), Some(c)) = terms {
                            self.record(&mut res, n, t, dd, s, None, here - a, b - c);
                        }
                    }
                }
                Property::P6 => {
                    for j in (0..n_sellers).filter(|&j| j != n) {
                        let Some(down) = s.decremented(j) else {
                            continue;
                        };
                        let terms = (
                            self.v(n, t, d - 1, &up_n),
                            self.v(n, t, d, &down),
                            self.v(n, t, d - 1, &down.incremented(n)),
                        );
                        if let (Some(a), Some(b), Some(c)) = terms {
                            self.record(&mut res, n, t, dd, s, Some(j), here - a, b - c);
                        }
                    }
                }
                Property::P5Statement => {
                    if t < last {
                        let terms = (
                            self.v(n, t, d, &up_n),
                            self.v(n, t + 1, d, s),
                            self.v(n, t + 1, d, &up_n),
                        );
                        if let (Some(a), Some(b), Some(c)) = terms {
                            self.record(&mut res, n, t, dd, s, None, here - a, b - c);
                        }
                    }
                }
                Property::P6Statement => {
                    for j in (0..n_sellers).filter(|&j| j != n) {
                        let Some(down) = s.decremented(j) else {
                            continue;
                        };
                        let terms = (
                            self.v(n, t, d, &up_n),
                            self.v(n, t, d, &down),
                            self.v(n, t, d, &down.incremented(n)),
                        );
                        if let (Some(a), Some(b), Some(c)) = terms {
                            self.record(&mut res, n, t, dd, s, Some(j), here - a, b + c);
                        }
                    }
                }
            }
        }
        res
    }
}

pub fn check_property(
    tables: &ValueTables,
    property: Property,
    max_counterexamples: usize,
) -> PropertyResult {
    Checker {
        tables,
        limit: max_counterexamples,
    }
    .run(property)
}

pub fn check_p1(tables: &ValueTables) -> PropertyResult {
    check_property(tables, Property::P1, DEFAULT_COUNTEREXAMPLES)
}

pub fn check_p2(tables: &ValueTables) -> PropertyResult {
    check_property(tables, Property::P2, DEFAULT_COUNTEREXAMPLES)
}

pub fn check_p3(tables: &ValueTables) -> PropertyResult {
    check_property(tables, Property::P3, DEFAULT_COUNTEREXAMPLES)
}

pub fn check_p4(tables: &ValueTables) -> PropertyResult {
    check_property(tables, Property::P4, DEFAULT_COUNTEREXAMPLES)
}

pub fn check_p5(tables: &ValueTables) -> PropertyResult {
    check_property(tables, Property::P5, DEFAULT_COUNTEREXAMPLES)
}

pub fn check_p6(tables: &ValueTables) -> PropertyResult {
    check_property(tables, Property::P6, DEFAULT_COUNTEREXAMPLES)
}

/// Runs all eight checks.
pub fn check_all(tables: &ValueTables, max_counterexamples: usize) -> PropertyReport {
    PropertyReport {
        instance_hash: tables.instance().content_hash().to_string(),
        results: Property::ALL
            .iter()
            .map(|&p| check_property(tables, p, max_counterexamples))
            .collect(),
    }
}
