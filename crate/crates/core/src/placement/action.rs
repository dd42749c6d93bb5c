use serde::{Deserialize, Serialize};

use crate::scenario::{Location3D, NetworkState};

/// Axis-aligned MAP movements of one fixed step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Forward,
    Backward,
    Up,
    Down,
    Left,
    Right,
    Hover,
}

impl Action {
    pub const COUNT: usize = 7;

    pub const ALL: [Action; Action::COUNT] = [
        Action::Forward,
        Action::Backward,
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Hover,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    /// Unit displacement: forward/backward along y, right/left along x, up/down along z.
    pub fn direction(self) -> [f64; 3] {
        match self {
            Action::Forward => [0.0, 1.0, 0.0],
            Action::Backward => [0.0, -1.0, 0.0],
            Action::Up => [0.0, 0.0, 1.0],
            Action::Down => [0.0, 0.0, -1.0],
            Action::Left => [-1.0, 0.0, 0.0],
            Action::Right => [1.0, 0.0, 0.0],
            Action::Hover => [0.0, 0.0, 0.0],
        }
    }
}

/// Location reached from `loc` by `action`, clipped to the region.
pub fn next_location(state: &NetworkState, loc: Location3D, action: Action) -> Location3D {
    let step = state.config.map_step_m;
    let [dx, dy, dz] = action.direction();
    state
        .region()
        .clamp(Location3D::new(loc.x + dx * step, loc.y + dy * step, loc.z + dz * step))
}

/// Moves MAP `map` and returns its new location.
pub fn apply_action(state: &mut NetworkState, map: usize, action: Action) -> Location3D {
    let loc = next_location(state, state.maps[map].loc, action);
    state.move_map(map, loc);
    loc
}
