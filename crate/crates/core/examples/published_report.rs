//! Render the report tables from externally supplied per-condition alpha
//! values instead of a run, and export them in every format.

use personasim::ablation::{export, AblationReport, ConditionSummary, ExportFormat};
use personasim::condition::ConditionId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rows = vec![
        ConditionSummary::from_alpha(ConditionId::Baseline, [0.68, 0.72, 0.71, 0.70, 0.70]),
        ConditionSummary::from_alpha(ConditionId::PlusMemory, [0.69, 0.73, 0.70, 0.71, 0.70]),
        ConditionSummary::from_alpha(ConditionId::PlusCcd, [0.88, 0.91, 0.89, 0.90, 0.88]),
        ConditionSummary::from_alpha(ConditionId::PlusLora, [0.93, 0.95, 0.94, 0.95, 0.93]),
    ];
    let report = AblationReport::from_summaries(rows)?;
    for name in ["internal_consistency", "ablation_summary", "dimension_improvements"] {
        print!("{}\n", report.table(name).expect("table exists").to_markdown());
    }
    let dir = std::env::temp_dir().join("personasim-published-report");
    for f in ExportFormat::ALL {
        for p in export(&report, &dir, f)? {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}
