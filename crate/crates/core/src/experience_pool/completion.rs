use std::collections::BTreeSet;

use crate::craftworld::{Item, RecipeBook};
use crate::error::Result;

/// Fraction of the milestones of `target` reached along a trajectory of
/// inventories. A milestone counts once it has been held, or once any item
/// that depends on it has been held. The target itself counts only when the
/// final inventory holds `target_count` of it, so the ratio is 1 exactly on
/// success.
pub fn completion_ratio(target: Item, target_count: u32, inventories: &[[u8; Item::COUNT]], book: &RecipeBook) -> Result<f64> {
    let milestones = book.milestones(target)?;
    let Some(last) = inventories.last() else {
        return Ok(0.0);
    };
    let mut achieved = BTreeSet::new();
    for item in Item::ALL {
        if inventories.iter().any(|inv| inv[item.index()] > 0) {
            achieved.insert(item);
            if book.requirements(item).is_ok() {
                achieved.extend(book.ancestors(item)?);
            }
        }
    }
    if last[target.index()] as u32 >= target_count.max(1) {
        return Ok(1.0);
    }
    achieved.remove(&target);
    let hit = milestones.iter().filter(|m| achieved.contains(m)).count();
    Ok(hit as f64 / milestones.len() as f64)
}
