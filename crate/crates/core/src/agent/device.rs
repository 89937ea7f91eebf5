//! Device abstraction for the phone-control loop, plus a scriptable mock
//! device driven by a JSON scenario file.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::action::ScrollDirection;
use crate::geometry::{point_in_box, BBox, Point};
use crate::types::{bbox_array, Screenshot};

#[derive(Debug, thiserror::Error)]
pub enum DeviceError {
    #[error("device unresponsive: {0}")]
    Unresponsive(String),
    #[error("unknown app: {0}")]
    UnknownApp(String),
    #[error("bad scenario: {0}")]
    Scenario(String),
}

/// Operations a concrete environment must provide. A live Android adapter
/// would implement this over ADB; tests use [`MockDevice`].
pub trait DeviceAdapter {
    fn screenshot(&mut self) -> Result<Screenshot, DeviceError>;
    fn tap(&mut self, p: Point) -> Result<(), DeviceError>;
    fn long_press(&mut self, p: Point) -> Result<(), DeviceError>;
    fn type_text(&mut self, text: &str) -> Result<(), DeviceError>;
    fn key_home(&mut self) -> Result<(), DeviceError>;
    fn key_back(&mut self) -> Result<(), DeviceError>;
    fn swipe(&mut self, direction: ScrollDirection) -> Result<(), DeviceError>;
    fn open_app(&mut self, name: &str) -> Result<(), DeviceError>;
}

/// One recorded device operation, for asserting on mock runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "call", rename_all = "snake_case")]
pub enum DeviceCall {
    Screenshot,
    Tap { x: f64, y: f64 },
    LongPress { x: f64, y: f64 },
    TypeText { text: String },
    KeyHome,
    KeyBack,
    Swipe { direction: ScrollDirection },
    OpenApp { name: String },
}

/// A tappable region of a mock screen. Tapping inside `bbox` optionally
/// transitions to `on_tap` and/or raises `sets_flag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub name: String,
    #[serde(with = "bbox_array")]
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_tap: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sets_flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenSpec {
    pub screen: String,
    #[serde(default)]
    pub regions: Vec<RegionSpec>,
}

/// Terminal success condition for a scenario: either reaching a screen or
/// raising a named flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SuccessPredicate {
    Screen { screen: String },
    Flag { flag: String },
}

/// A scripted phone: screens with named tappable regions, app launch
/// targets, and an optional success predicate used as a test oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScenario {
    pub screens: Vec<ScreenSpec>,
    pub start_screen: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home_screen: Option<String>,
    #[serde(default)]
    pub apps: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_predicate: Option<SuccessPredicate>,
}

impl MockScenario {
    pub fn from_json(json: &str) -> Result<MockScenario, DeviceError> {
        let scenario: MockScenario =
            serde_json::from_str(json).map_err(|e| DeviceError::Scenario(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let known: BTreeSet<&str> = self.screens.iter().map(|s| s.screen.as_str()).collect();
        let check = |name: &str, what: &str| {
            if known.contains(name) {
                Ok(())
            } else {
                Err(DeviceError::Scenario(format!("{what} references unknown screen {name:?}")))
            }
        };
        check(&self.start_screen, "start_screen")?;
        if let Some(home) = &self.home_screen {
            check(home, "home_screen")?;
        }
        for (app, screen) in &self.apps {
            check(screen, &format!("app {app:?}"))?;
        }
        for spec in &self.screens {
            for region in &spec.regions {
                if let Some(target) = &region.on_tap {
                    check(target, &format!("region {:?}", region.name))?;
                }
            }
        }
        Ok(())
    }

    fn screen(&self, name: &str) -> Option<&ScreenSpec> {
        self.screens.iter().find(|s| s.screen == name)
    }

    /// Screen name encoded in a mock screenshot id (the part before `#`).
    pub fn screen_of_shot(shot_id: &str) -> &str {
        shot_id.split('#').next().unwrap_or(shot_id)
    }

    /// Center of the region a target description refers to on a screen:
    /// an exact name match, or a region whose name the description contains.
    pub fn region_center(&self, screen: &str, target: &str) -> Option<Point> {
        let spec = self.screen(screen)?;
        let target_lower = target.to_ascii_lowercase();
        let region = spec
            .regions
            .iter()
            .find(|r| r.name == target)
            .or_else(|| {
                spec.regions.iter().find(|r| target_lower.contains(&r.name.to_ascii_lowercase()))
            })?;
        Some(region.bbox.center())
    }
}

/// In-memory device implementing [`DeviceAdapter`] over a [`MockScenario`].
///
/// Screenshot ids encode the current screen and a monotone counter
/// (`settings#3`), so a screenshot taken after an action always reflects it.
pub struct MockDevice {
    scenario: MockScenario,
    current_screen: String,
    flags: BTreeSet<String>,
    typed: Vec<String>,
    back_stack: Vec<String>,
    shot_counter: usize,
    failing: bool,
    pub calls: Vec<DeviceCall>,
}

impl MockDevice {
    pub fn new(scenario: MockScenario) -> Result<MockDevice, DeviceError> {
        scenario.validate()?;
        let current_screen = scenario.start_screen.clone();
        Ok(MockDevice {
            scenario,
            current_screen,
            flags: BTreeSet::new(),
            typed: Vec::new(),
            back_stack: Vec::new(),
            shot_counter: 0,
            failing: false,
            calls: Vec::new(),
        })
    }

    pub fn from_json(json: &str) -> Result<MockDevice, DeviceError> {
        MockDevice::new(MockScenario::from_json(json)?)
    }

    pub fn scenario(&self) -> &MockScenario {
        &self.scenario
    }

    pub fn current_screen(&self) -> &str {
        &self.current_screen
    }

    pub fn flags(&self) -> &BTreeSet<String> {
        &self.flags
    }

    pub fn typed_text(&self) -> &[String] {
        &self.typed
    }

    /// Makes every subsequent device operation fail, to exercise abort paths.
    pub fn set_failing(&mut self, failing: bool) {
        self.failing = failing;
    }

    /// Evaluates the scenario's success predicate, if it has one.
    pub fn succeeded(&self) -> Option<bool> {
        match self.scenario.success_predicate.as_ref()? {
            SuccessPredicate::Screen { screen } => Some(self.current_screen == *screen),
            SuccessPredicate::Flag { flag } => Some(self.flags.contains(flag)),
        }
    }

    fn check_up(&self) -> Result<(), DeviceError> {
        if self.failing {
            Err(DeviceError::Unresponsive("scripted failure".into()))
        } else {
            Ok(())
        }
    }

    fn go_to(&mut self, screen: String) {
        if screen != self.current_screen {
            self.back_stack.push(std::mem::replace(&mut self.current_screen, screen));
        }
    }

    fn press_at(&mut self, p: Point) {
        let Some(spec) = self.scenario.screen(&self.current_screen) else { return };
        let hit = spec.regions.iter().find(|r| point_in_box(p, r.bbox)).cloned();
        if let Some(region) = hit {
            if let Some(flag) = region.sets_flag {
                self.flags.insert(flag);
            }
            if let Some(next) = region.on_tap {
                self.go_to(next);
            }
        }
    }
}

impl DeviceAdapter for MockDevice {
    fn screenshot(&mut self) -> Result<Screenshot, DeviceError> {
        self.check_up()?;
        self.calls.push(DeviceCall::Screenshot);
        self.shot_counter += 1;
        let id = format!("{}#{}", self.current_screen, self.shot_counter);
        Ok(Screenshot {
            id: id.clone(),
            width: 1080,
            height: 1920,
            image_ref: format!("mock://{id}"),
        })
    }

    fn tap(&mut self, p: Point) -> Result<(), DeviceError> {
        self.check_up()?;
        self.calls.push(DeviceCall::Tap { x: p.x, y: p.y });
        self.press_at(p);
        Ok(())
    }

    fn long_press(&mut self, p: Point) -> Result<(), DeviceError> {
        self.check_up()?;
        self.calls.push(DeviceCall::LongPress { x: p.x, y: p.y });
        self.press_at(p);
        Ok(())
    }

    fn type_text(&mut self, text: &str) -> Result<(), DeviceError> {
        self.check_up()?;
        self.calls.push(DeviceCall::TypeText { text: text.to_string() });
        self.typed.push(text.to_string());
        Ok(())
    }

    fn key_home(&mut self) -> Result<(), DeviceError> {
        self.check_up()?;
        self.calls.push(DeviceCall::KeyHome);
        let home =
            self.scenario.home_screen.clone().unwrap_or_else(|| self.scenario.start_screen.clone());
        self.current_screen = home;
        self.back_stack.clear();
        Ok(())
    }

    fn key_back(&mut self) -> Result<(), DeviceError> {
        self.check_up()?;
        self.calls.push(DeviceCall::KeyBack);
        if let Some(prev) = self.back_stack.pop() {
            self.current_screen = prev;
        }
        Ok(())
    }

    fn swipe(&mut self, direction: ScrollDirection) -> Result<(), DeviceError> {
        self.check_up()?;
        self.calls.push(DeviceCall::Swipe { direction });
        Ok(())
    }

    fn open_app(&mut self, name: &str) -> Result<(), DeviceError> {
        self.check_up()?;
        self.calls.push(DeviceCall::OpenApp { name: name.to_string() });
        let Some(screen) = self.scenario.apps.get(name).cloned() else {
            return Err(DeviceError::UnknownApp(name.to_string()));
        };
        self.go_to(screen);
        Ok(())
    }
}

#[cfg(test)]
pub(crate) fn settings_scenario() -> MockScenario {
    MockScenario::from_json(
        r#"{
            "screens": [
                {"screen": "home", "regions": []},
                {"screen": "settings", "regions": [
                    {"name": "wifi toggle", "bbox": [100, 200, 300, 260], "sets_flag": "wifi_on"},
                    {"name": "network", "bbox": [100, 400, 300, 460], "on_tap": "network"}
                ]},
                {"screen": "network", "regions": []}
            ],
            "start_screen": "home",
            "home_screen": "home",
            "apps": {"Settings": "settings"},
            "success_predicate": {"flag": "wifi_on"}
        }"#,
    )
    .unwrap()
}
