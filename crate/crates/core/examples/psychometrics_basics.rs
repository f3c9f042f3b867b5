//! Cronbach's alpha, ICC(A,1) with its confidence interval, interpretation
//! bands, and nearest-profile discrimination on small hand-made data.

use personasim::persona::OceanVector;
use personasim::psychometrics::{cronbach_alpha, discriminate, icc_absolute_agreement, interpret_alpha, interpret_icc, ItemMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let items = ItemMatrix::new(vec![
        vec![4.0, 4.5, 4.0, 3.5],
        vec![2.0, 2.5, 2.0, 2.5],
        vec![3.0, 3.5, 3.5, 3.0],
        vec![5.0, 4.5, 5.0, 4.5],
        vec![1.5, 2.0, 1.5, 2.0],
    ])?;
    let alpha = cronbach_alpha(&items)?;
    println!("alpha = {alpha:.4} ({})", interpret_alpha(alpha).as_str());

    let icc = icc_absolute_agreement(&items)?;
    println!(
        "ICC(A,1) = {:.4} [{:.3}, {:.3}], F = {:.2} ({})",
        icc.icc,
        icc.ci_low,
        icc.ci_high,
        icc.f,
        interpret_icc(icc.icc).label()
    );

    let protos = [
        OceanVector::from_array([4.0, 4.0, 3.0, 4.0, 2.0])?,
        OceanVector::from_array([2.0, 2.5, 2.0, 3.0, 4.5])?,
        OceanVector::from_array([3.0, 3.0, 4.5, 4.5, 2.5])?,
    ];
    let obs: Vec<(usize, OceanVector)> = vec![
        (0, OceanVector::from_array([3.8, 4.1, 3.2, 3.9, 2.2])?),
        (0, OceanVector::from_array([3.2, 3.0, 3.9, 4.2, 2.4])?),
        (1, OceanVector::from_array([2.2, 2.4, 2.1, 3.1, 4.2])?),
        (2, OceanVector::from_array([3.1, 3.2, 4.4, 4.3, 2.4])?),
    ];
    let labels = vec!["A".into(), "B".into(), "C".into()];
    let report = discriminate(labels, &protos, &obs);
    println!("confusion {:?}", report.confusion);
    println!(
        "accuracy {:.3}, macro P/R/F1 {:.3}/{:.3}/{:.3}, macro AUC {:.3}",
        report.accuracy, report.macro_precision, report.macro_recall, report.macro_f1, report.macro_auc
    );
    Ok(())
}
