//! Canonical case-file writer: the exact inverse of the parsed column subset.
//!
//! Buses are emitted in slot order, so a freshly parsed case (identity slot
//! order) round-trips to an identical structure and a derived sub-network
//! serializes with its slot semantics baked into the bus order.

use std::fmt::Write as _;

use super::NetworkCase;

/// Renders a [`NetworkCase`] as MATPOWER-style case text.
pub fn write_case(case: &NetworkCase) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "function mpc = {}", case.name);
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {};", fmt(case.base_mva));

    let _ = writeln!(s, "\n%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin");
    let _ = writeln!(s, "mpc.bus = [");
    for &i in &case.slot_order {
        let b = &case.buses[i];
        let kind = match b.kind {
            super::BusKind::Pq => 1,
            super::BusKind::Pv => 2,
            super::BusKind::Slack => 3,
        };
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{}\t{}\t1\t{}\t{};",
            b.id,
            kind,
            fmt(b.pd),
            fmt(b.qd),
            fmt(b.gs),
            fmt(b.bs),
            fmt(b.vm0),
            fmt(b.va0),
            fmt(b.base_kv),
            fmt(b.vmax),
            fmt(b.vmin)
        );
    }
    let _ = writeln!(s, "];");

    let _ = writeln!(s, "\n%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin");
    let _ = writeln!(s, "mpc.gen = [");
    for g in &case.generators {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{};",
            case.buses[g.bus].id,
            fmt(g.pg0),
            fmt(g.qg0),
            fmt(g.qmax),
            fmt(g.qmin),
            fmt(g.vg),
            fmt(case.base_mva),
            fmt(g.pmax),
            fmt(g.pmin)
        );
    }
    let _ = writeln!(s, "];");

    let _ = writeln!(s, "\n%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax");
    let _ = writeln!(s, "mpc.branch = [");
    for br in &case.branches {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t{}\t{}\t1\t-360\t360;",
            case.buses[br.from].id,
            case.buses[br.to].id,
            fmt(br.r),
            fmt(br.x),
            fmt(br.b),
            fmt(br.smax),
            fmt(br.tap),
            fmt(br.shift)
        );
    }
    let _ = writeln!(s, "];");

    let _ = writeln!(s, "\n%% model startup shutdown n c2 c1 c0");
    let _ = writeln!(s, "mpc.gencost = [");
    for g in &case.generators {
        let _ = writeln!(
            s,
            "\t2\t0\t0\t3\t{}\t{}\t{};",
            fmt(g.cost.0),
            fmt(g.cost.1),
            fmt(g.cost.2)
        );
    }
    let _ = writeln!(s, "];");
    s
}

/// f64 Display is the shortest exact round-trip representation, which keeps
/// write -> parse lossless.
fn fmt(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::super::parse_case;
    use super::*;

    const AWKWARD: &str = "\
function mpc = awkward
mpc.baseMVA = 100;
mpc.bus = [
    7  3  0      0    0.3  -4.25 1  1.02  -3.5 345  1  1.06  0.94;
    3  1  21.7   12.7 0    0     1  1     0    345  1  1.06  0.94;
    12 2  0.001  -2   0    19    1  1     0    345  1  1.1   0.9;
];
mpc.gen = [
    7   10  0  300  -300  1.025  100  1  250  10;
    12  20  5  40   -40   1.0125 100  1  80   0;
];
mpc.branch = [
    7  3   0.01   0.085  0.176  250  0  0  0      0    1  -360  360;
    3  12  0.017  0.092  0.158  0    0  0  0.978  1.5  1  -360  360;
];
mpc.gencost = [
    2  0  0  3  0.0625        40     0;
    2  0  0  3  0.0083333333  13.25  7;
];
";

    #[test]
    fn round_trip_is_identical() {
        let case = parse_case(AWKWARD).unwrap();
        let text = write_case(&case);
        let again = parse_case(&text).unwrap();
        assert_eq!(case, again);
    }

    #[test]
    fn round_trip_survives_bit_exact_floats() {
        let mut case = parse_case(AWKWARD).unwrap();
        case.branches[0].x = 0.1 + 0.2; // 0.30000000000000004
        case.buses[0].pd = 1.0 / 3.0;
        let again = parse_case(&write_case(&case)).unwrap();
        assert_eq!(case, again);
    }
}
