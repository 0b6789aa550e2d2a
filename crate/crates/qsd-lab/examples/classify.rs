//! Boundary classification and the QSD-count criterion for a few diffusions.

use qsd_lab::model::{BoundaryEnd, ClassifyParams, Density, DiffusionSpec, QsdVerdict};

fn report(name: &str, spec: &DiffusionSpec) {
    let params = ClassifyParams::default();
    println!("{name} on (0, {}):", spec.ell());
    for end in [BoundaryEnd::Lower, BoundaryEnd::Upper] {
        match spec.classify_boundary(end, &params) {
            Ok(class) => println!(
                "  {:?} boundary: {} (I = {:e}, J = {:e})",
                end, class.kind, class.i_value, class.j_value
            ),
            Err(e) => println!("  {end:?} boundary: {e}"),
        }
    }
    match spec.qsd_count(&params) {
        Ok(QsdVerdict::UniqueQsd { .. }) => println!("  QSDs: exactly one"),
        Ok(QsdVerdict::InfinitelyMany { limsup, m_tail }) => println!(
            "  QSDs: a continuum (m tail {m_tail:.4e}, limsup s*m = {limsup:.4e})"
        ),
        Ok(QsdVerdict::No { reason }) => println!("  QSDs: criterion fails ({reason})"),
        Ok(QsdVerdict::Inconclusive { detail }) => println!("  QSDs: inconclusive ({detail})"),
        Err(e) => println!("  QSDs: {e}"),
    }
    println!();
}

fn main() {
    report("Brownian motion with drift -1", &DiffusionSpec::bm_with_drift(1.0));
    report("standard Brownian motion", &DiffusionSpec::standard_bm());
    report("Ornstein-Uhlenbeck, rate 1", &DiffusionSpec::ou(1.0));

    // The same drifted Brownian motion written in natural scale: the
    // classification must not change under the scale transform.
    let natural = DiffusionSpec::bm_with_drift(1.0)
        .natural_scale_transform()
        .expect("scale transform");
    report("drifted BM in natural scale", &natural);

    // A speed measure blowing up like x^-3 near 0 makes the origin natural:
    // the process cannot reach it, so there is no absorption to condition on.
    let heavy = DiffusionSpec::from_measures(
        f64::INFINITY,
        Density::from_fn(|x| x.powi(-3).min(1e300) * (-x).exp()),
        Density::constant(1.0),
    )
    .expect("spec");
    report("speed density x^-3 e^-x", &heavy);
}
