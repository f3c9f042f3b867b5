//! Load the fixture roster, show one persona block and the pairwise profile
//! distances, then derive a new profile from a role template.

use std::path::Path;

use personasim::persona::{ocean_distance, render_persona_block, role_template, Dimension, RoleCategory, Roster};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/profiles");
    let roster = Roster::load_dir(&dir)?;
    println!("{} profiles: {}", roster.len(), roster.ids().collect::<Vec<_>>().join(", "));

    let first = &roster.profiles()[0];
    println!("\n{}", render_persona_block(first));

    println!("pairwise OCEAN distances:");
    let ps = roster.profiles();
    for (i, a) in ps.iter().enumerate() {
        for b in &ps[i + 1..] {
            println!("  {:<20} {:<20} {:.3}", a.agent_id, b.agent_id, ocean_distance(&a.personality, &b.personality));
        }
    }

    let sub = personasim::persona::role_subtypes(RoleCategory::HealthcareProvider)[0];
    let t = role_template(RoleCategory::HealthcareProvider, sub)?;
    let traits: Vec<String> = Dimension::ALL.iter().map(|d| format!("{}={}", d.letter(), t.personality.get(*d))).collect();
    println!("\ntemplate {sub}: {}", traits.join(" "));
    Ok(())
}
