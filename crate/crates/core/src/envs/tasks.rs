use std::fmt;
use std::str::FromStr;

use super::config::Variant;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskId {
    Stack,
    UnstackStack,
    Bring,
    Insert,
    OpenGripper,
    CloseGripper,
    Reach,
    Lift,
    Move,
}

impl TaskId {
    pub const ALL: [TaskId; 9] = [
        TaskId::Stack,
        TaskId::UnstackStack,
        TaskId::Bring,
        TaskId::Insert,
        TaskId::OpenGripper,
        TaskId::CloseGripper,
        TaskId::Reach,
        TaskId::Lift,
        TaskId::Move,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Stack => "stack",
            TaskId::UnstackStack => "unstack-stack",
            TaskId::Bring => "bring",
            TaskId::Insert => "insert",
            TaskId::OpenGripper => "open-gripper",
            TaskId::CloseGripper => "close-gripper",
            TaskId::Reach => "reach",
            TaskId::Lift => "lift",
            TaskId::Move => "move",
        }
    }

    /// Main task for an environment variant.
    pub fn main_for(variant: Variant) -> TaskId {
        match variant {
            Variant::Stack => TaskId::Stack,
            Variant::UnstackStack => TaskId::UnstackStack,
            Variant::Bring => TaskId::Bring,
            Variant::Insert => TaskId::Insert,
        }
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        let key = match key.as_str() {
            "move-object" => "move",
            other => other,
        };
        TaskId::ALL
            .into_iter()
            .find(|t| t.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Main task plus ordered auxiliary tasks. Index 0 is always the main task;
/// per-task network heads follow this order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskSet {
    main: TaskId,
    aux: Vec<TaskId>,
}

impl TaskSet {
    pub fn new(main: TaskId, aux: Vec<TaskId>) -> Result<Self> {
        let mut seen = vec![main];
        for &t in &aux {
            if seen.contains(&t) {
                return Err(Error::Config(format!(
                    "task `{t}` listed twice in task set"
                )));
            }
            seen.push(t);
        }
        Ok(Self { main, aux })
    }

    /// Main task alone (single-task baselines).
    pub fn single(main: TaskId) -> Self {
        Self { main, aux: vec![] }
    }

    /// Default auxiliary set for a variant: open, close, reach, lift, move,
    /// plus bring for insert.
    pub fn standard(variant: Variant) -> Self {
        let mut aux = vec![
            TaskId::OpenGripper,
            TaskId::CloseGripper,
            TaskId::Reach,
            TaskId::Lift,
            TaskId::Move,
        ];
        if variant == Variant::Insert {
            aux.push(TaskId::Bring);
        }
        Self {
            main: TaskId::main_for(variant),
            aux,
        }
    }

    pub fn main(&self) -> TaskId {
        self.main
    }

    pub fn aux(&self) -> &[TaskId] {
        &self.aux
    }

    pub fn len(&self) -> usize {
        1 + self.aux.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tasks(&self) -> Vec<TaskId> {
        std::iter::once(self.main)
            .chain(self.aux.iter().copied())
            .collect()
    }

    pub fn get(&self, index: usize) -> Option<TaskId> {
        if index == 0 {
            Some(self.main)
        } else {
            self.aux.get(index - 1).copied()
        }
    }

    pub fn index_of(&self, task: TaskId) -> Option<usize> {
        if task == self.main {
            Some(0)
        } else {
            self.aux.iter().position(|&t| t == task).map(|i| i + 1)
        }
    }

    /// Comma-separated names, main first.
    pub fn describe(&self) -> String {
        self.tasks()
            .iter()
            .map(|t| t.name())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_list(text: &str) -> Result<Self> {
        let tasks: Vec<TaskId> = text
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        let (&main, aux) = tasks
            .split_first()
            .ok_or_else(|| Error::Config("empty task list".into()))?;
        Self::new(main, aux.to_vec())
    }
}
