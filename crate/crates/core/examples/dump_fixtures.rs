//! Regenerates the shipped experiment configs in `fixtures/` from the
//! bundled specs. Run from the workspace root:
//! `cargo run -p gwre --example dump_fixtures`.

use gwre::fixtures;
use gwre::LeslieSpec;
use serde::Serialize;

#[derive(Serialize)]
struct Wrapped {
    seed: u64,
    spec: LeslieSpec,
}

fn main() {
    let entries: [(&str, LeslieSpec, &str); 8] = [
        (
            "l2toy",
            fixtures::l2toy(),
            "# Two-age numeric toy (growth data in closed form); fails the\n\
             # positivity floor on purpose, so `check` reports a failure.\n",
        ),
        (
            "geo_supercritical",
            fixtures::geo_supercritical(),
            "# Supercritical geometric-tail fixture (growth rate ~1.16).\n",
        ),
        (
            "geo_slow_growth",
            fixtures::geo_slow_growth(),
            "# Slow-growth geometric fixture (~1.06) for long horizons.\n",
        ),
        (
            "geo_subcritical",
            fixtures::geo_subcritical(),
            "# Subcritical fixture (~0.69): extinction is almost sure.\n",
        ),
        (
            "bs_binomial",
            fixtures::bs_binomial(),
            "# Bounded-support (binomial-shaped) fixture for enumeration checks.\n",
        ),
        (
            "polytail_a5",
            fixtures::polytail_a5(),
            "# Polynomial-tail fixture with exponents in [2.6, 3.4].\n",
        ),
        (
            "poisson_unclassified",
            fixtures::poisson_unclassified(),
            "# Poisson fertility: belongs to no tail class.\n",
        ),
        (
            "markov_two_state",
            fixtures::markov_two_state(),
            "# Two-state Markov environment (stationary law (2/3, 1/3)).\n",
        ),
    ];
    std::fs::create_dir_all("fixtures").unwrap();
    for (name, spec, header) in entries {
        let body = toml::to_string(&Wrapped { seed: 0, spec }).unwrap();
        let path = format!("fixtures/{name}.toml");
        std::fs::write(&path, format!("{header}{body}")).unwrap();
        println!("wrote {path}");
    }
}
