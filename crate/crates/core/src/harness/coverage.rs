//! Element coverage: which ids on the application's pages are asserted by
//! at least one atomic test.
//!
//! The inventory comes from sweeping every view route as every actor of
//! every shipped fixture. The asserted set is derived by replaying each
//! test against the reference model, which yields exactly the elements
//! its oracle checks compare. Error pages are not part of the inventory.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::browser::{BrowseError, Browser};
use super::oracle::{self, Fixture, SHIPPED_FIXTURES};
use super::page::ElementKind;
use super::registry::{Category, Check, Step, TestCase};
use super::runner::intent;
use super::transport::Transport;
use super::world::{World, WorldError};

/// `(view id, element id)`.
pub type ElementKey = (String, String);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Inventory {
    pub elements: BTreeMap<ElementKey, ElementKind>,
}

impl Inventory {
    pub fn active(&self) -> BTreeSet<ElementKey> {
        self.of_kind(ElementKind::Active)
    }

    pub fn passive(&self) -> BTreeSet<ElementKey> {
        self.of_kind(ElementKind::Passive)
    }

    fn of_kind(&self, kind: ElementKind) -> BTreeSet<ElementKey> {
        self.elements
            .iter()
            .filter(|(_, k)| **k == kind)
            .map(|(key, _)| key.clone())
            .collect()
    }
}

/// Sweeps all view routes for the anonymous visitor and every user of
/// every shipped fixture, keeping the pages that render successfully.
pub fn page_inventory(transport: &dyn Transport) -> Result<Inventory, BrowseError> {
    let mut inventory = Inventory::default();
    let mut browser = Browser::new(transport).with_run_id("inventory");
    for fixture_id in SHIPPED_FIXTURES {
        let fixture = Fixture::shipped(fixture_id).expect("shipped fixture");
        let actors = std::iter::once(None).chain(fixture.users.iter().map(|u| Some(u.id.clone())));
        for actor in actors {
            for view in oracle::VIEW_IDS {
                browser.reset(fixture_id)?;
                if let Some(user) = &actor {
                    let fields = [
                        ("username".to_string(), user.clone()),
                        ("password".to_string(), format!("{user}-secret")),
                    ];
                    browser.post("/login", &fields)?;
                }
                let page = browser.open(oracle::route(view).expect("routed view"))?;
                if page.status != 200 || page.view != *view {
                    continue;
                }
                for el in &page.elements {
                    inventory
                        .elements
                        .insert((view.to_string(), el.id.clone()), el.kind);
                }
            }
        }
    }
    Ok(inventory)
}

/// Elements the oracle checks of `test` compare, found by replaying the
/// test on the reference model.
pub fn asserted_elements(test: &TestCase) -> Result<BTreeSet<ElementKey>, WorldError> {
    let mut world = World::shipped(&test.fixture_id)
        .ok_or_else(|| WorldError::UnknownFixture(test.fixture_id.clone()))?;
    let replay = |world: &mut World, step: &Step| -> Result<_, WorldError> {
        let i = intent(world, step)?;
        Ok(world.request(&i.method, &i.path, &i.fields))
    };
    if let Some(user) = &test.entry.user {
        let login = Step::Login {
            user: user.clone(),
            password: None,
            raw: true,
        };
        replay(&mut world, &login)?;
    }
    if let Some(path) = &test.entry.path {
        replay(&mut world, &Step::Open { path: path.clone() })?;
    }
    let mut asserted = BTreeSet::new();
    for block in &test.blocks {
        let mut last = None;
        for step in &block.steps {
            last = Some(replay(&mut world, step)?);
        }
        if let (Some(p), true) = (last, block.checks.contains(&Check::Oracle)) {
            let expectation = world.expectation(&p)?;
            asserted.extend(
                expectation
                    .elements
                    .into_iter()
                    .map(|(id, _)| (p.view.clone(), id)),
            );
        }
    }
    Ok(asserted)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CoverageReport {
    pub active_total: usize,
    pub passive_total: usize,
    pub uncovered_active: Vec<ElementKey>,
    /// Reported, not enforced.
    pub uncovered_passive: Vec<ElementKey>,
}

impl CoverageReport {
    pub fn active_ratio(&self) -> f64 {
        ratio(self.active_total, self.uncovered_active.len())
    }

    pub fn passive_ratio(&self) -> f64 {
        ratio(self.passive_total, self.uncovered_passive.len())
    }
}

fn ratio(total: usize, missing: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        (total - missing) as f64 / total as f64
    }
}

/// Inventory elements that no atomic test in `tests` asserts.
pub fn element_coverage_check(
    tests: &[TestCase],
    inventory: &Inventory,
) -> Result<CoverageReport, WorldError> {
    let mut asserted = BTreeSet::new();
    for t in tests.iter().filter(|t| t.category == Category::Atomic) {
        asserted.extend(asserted_elements(t)?);
    }
    let active = inventory.active();
    let passive = inventory.passive();
    Ok(CoverageReport {
        active_total: active.len(),
        passive_total: passive.len(),
        uncovered_active: active.difference(&asserted).cloned().collect(),
        uncovered_passive: passive.difference(&asserted).cloned().collect(),
    })
}
