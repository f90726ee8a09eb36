//! Paths: evaluation, left limits, extension to the reals and
//! reconstruction from dense samples.
use cadlag_kit::cadlag::{extend_to_reals, extension_value, reconstruct_from_dense, CadlagPath, DenseSampleTable};
use cadlag_kit::{Time, TimeDomain, TimeSet};

fn main() -> cadlag_kit::Result<()> {
    let int = Time::from_int;
    // [0, 1] ∪ [2, 3]
    let domain = TimeDomain::new(TimeSet::new(vec![(int(0), int(1)), (int(2), int(3))], None)?);
    let path = CadlagPath::new(domain, 0, vec![(Time::from_decimal(0.5)?, 1), (Time::from_decimal(2.25)?, 2)], None)?;

    for t in [0.5, 2.25] {
        let t = Time::from_decimal(t)?;
        println!("at {t}: value {} left limit {}", path.eval(t)?, path.left_limit(t)?);
    }
    for t in [-1.0, 0.75, 1.5, 4.0] {
        let (x, case) = extension_value(&path, 9, Time::from_decimal(t)?)?;
        println!("extension at {t:>4}: {x} ({case:?})");
    }
    let ext = extend_to_reals(&path, 9, (int(-1), int(4)))?;
    println!("extended jumps: {:?}", ext.jumps().iter().map(|(t, x)| (t.to_f64(), *x)).collect::<Vec<_>>());

    let table = DenseSampleTable::from_path(&path, 4)?;
    let rec = reconstruct_from_dense(&table, 8)?;
    println!("{} samples at mesh {}, rebuilt jumps {:?}", table.samples().len(), table.mesh(), rec.path.jumps());
    assert_eq!(rec.path.jumps(), path.jumps());
    Ok(())
}
