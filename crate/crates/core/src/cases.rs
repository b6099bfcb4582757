//! Bundled cases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::{parse_case, Bus, CaseSettings, FlexUnit, Generator, Line, NetworkCase};
use crate::scalar::Scalar;

const UK38: &str = include_str!("../data/uk38.case");

/// Raw text of the bundled 38-bus case.
pub fn uk38_text() -> &'static str {
    UK38
}

/// Synthetic 38-bus, two-feeder network with four flexible units.
pub fn uk38<T: Scalar>() -> NetworkCase<T> {
    parse_case(UK38).expect("bundled case parses")
}

/// Reference bus 1 (1.0–1.001 p.u.) feeding a single load `p + jq` (MW / MVAr on a 1 MVA
/// base) at bus 2 through `r + jx` p.u. No flexibility.
pub fn two_bus<T: Scalar>(r: f64, x: f64, p: f64, q: f64) -> NetworkCase<T> {
    let c = T::lit;
    NetworkCase {
        name: "two-bus".into(),
        s_base: c(1.0),
        v_base: c(6.6),
        ref_bus: 1,
        buses: vec![
            Bus { id: 1, v_min: c(1.0), v_max: c(1.001), p_d: c(0.0), q_d: c(0.0) },
            Bus { id: 2, v_min: c(0.5), v_max: c(1.5), p_d: c(p), q_d: c(q) },
        ],
        lines: vec![Line {
            from_bus: 1,
            to_bus: 2,
            r: c(r),
            x: c(x),
            s_max: c(100.0),
            switchable: false,
            normal_status: true,
        }],
        generators: vec![Generator {
            bus: 1,
            p_min: c(-100.0),
            p_max: c(100.0),
            q_min: c(-100.0),
            q_max: c(100.0),
            is_reference: true,
        }],
        flex_units: vec![],
        settings: CaseSettings::default(),
    }
}

/// Small random feeder for property tests: `n_bus` buses on a 1 MVA base,
/// a random spanning tree rooted at the reference bus 1 (held within 1.0–1.001 p.u.),
/// plus one extra line when `meshed` and `n_bus >= 3`. Loads lie in
/// 0.1–0.3 MW / 0–0.15 MVAr; one flexible unit of ±0.1–0.3 MW/MVAr sits at
/// a random bus.
pub fn random_case<T: Scalar>(seed: u64, n_bus: usize, meshed: bool) -> NetworkCase<T> {
    assert!(n_bus >= 2, "a case needs at least two buses");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = T::lit;
    let mut buses = vec![Bus { id: 1, v_min: c(1.0), v_max: c(1.001), p_d: c(0.0), q_d: c(0.0) }];
    for id in 2..=n_bus {
        buses.push(Bus {
            id,
            v_min: c(0.9),
            v_max: c(1.1),
            p_d: c(rng.gen_range(0.1..0.3)),
            q_d: c(rng.gen_range(0.0..0.15)),
        });
    }
    let line = |a: usize, b: usize, rng: &mut ChaCha8Rng| Line {
        from_bus: a,
        to_bus: b,
        r: c(rng.gen_range(0.01..0.03)),
        x: c(rng.gen_range(0.02..0.06)),
        s_max: c(rng.gen_range(1.5..3.0)),
        switchable: false,
        normal_status: true,
    };
    let mut lines: Vec<Line<T>> = (2..=n_bus)
        .map(|id| {
            let parent = rng.gen_range(1..id);
            line(parent, id, &mut rng)
        })
        .collect();
    if meshed && n_bus >= 3 {
        // a chord between two buses not already adjacent
        let pairs: Vec<(usize, usize)> = (1..=n_bus)
            .flat_map(|a| (a + 1..=n_bus).map(move |b| (a, b)))
            .filter(|&(a, b)| !lines.iter().any(|l| (l.from_bus, l.to_bus) == (a, b)))
            .collect();
        if !pairs.is_empty() {
            let (a, b) = pairs[rng.gen_range(0..pairs.len())];
            lines.push(line(a, b, &mut rng));
        }
    }
    let cap = |rng: &mut ChaCha8Rng| c(rng.gen_range(0.1..0.3));
    let unit = FlexUnit {
        label: "F".into(),
        bus: rng.gen_range(2..=n_bus),
        p_up_max: cap(&mut rng),
        p_dn_max: cap(&mut rng),
        q_up_max: cap(&mut rng),
        q_dn_max: cap(&mut rng),
        cost_p: c(rng.gen_range(100.0..400.0)),
        cost_q: c(rng.gen_range(50.0..200.0)),
    };
    NetworkCase {
        name: format!("random-{seed}"),
        s_base: c(1.0),
        v_base: c(11.0),
        ref_bus: 1,
        buses,
        lines,
        generators: vec![Generator {
            bus: 1,
            p_min: c(-10.0),
            p_max: c(10.0),
            q_min: c(-10.0),
            q_max: c(10.0),
            is_reference: true,
        }],
        flex_units: vec![unit],
        settings: CaseSettings::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::validate_case;

    #[test]
    fn bundled_and_random_cases_validate() {
        let c: NetworkCase<f64> = uk38();
        assert_eq!(c.buses.len(), 38);
        assert_eq!(c.flex_units.len(), 4);
        for seed in 0..20 {
            let r: NetworkCase<f64> = random_case(seed, 2 + seed as usize % 5, seed % 2 == 1);
            let diags = validate_case(&r);
            assert!(diags.is_empty(), "{diags:?}");
        }
    }
}
