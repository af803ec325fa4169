use std::cell::{Ref, RefCell, RefMut};
use std::fmt;
use std::rc::Rc;

use super::Matrix;

#[derive(Debug)]
struct ParamData {
    name: String,
    value: Matrix,
    grad: Option<Matrix>,
    frozen: bool,
}

/// Shared handle to a trainable parameter matrix.
///
/// Cloning a `Param` clones the handle, not the data, so a layer copied into
/// a blended model keeps training the original weights.
#[derive(Clone)]
pub struct Param(Rc<RefCell<ParamData>>);

impl Param {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        Param(Rc::new(RefCell::new(ParamData {
            name: name.into(),
            value,
            grad: None,
            frozen: false,
        })))
    }

    pub fn name(&self) -> String {
        self.0.borrow().name.clone()
    }

    pub fn value(&self) -> Ref<'_, Matrix> {
        Ref::map(self.0.borrow(), |p| &p.value)
    }

    pub fn value_mut(&self) -> RefMut<'_, Matrix> {
        RefMut::map(self.0.borrow_mut(), |p| &mut p.value)
    }

    pub fn set_value(&self, value: Matrix) {
        self.0.borrow_mut().value = value;
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.borrow().value.shape()
    }

    /// Accumulated gradient; `None` until a backward pass reaches this
    /// parameter, and always `None` while frozen.
    pub fn grad(&self) -> Option<Ref<'_, Matrix>> {
        Ref::filter_map(self.0.borrow(), |p| p.grad.as_ref()).ok()
    }

    pub fn take_grad(&self) -> Option<Matrix> {
        self.0.borrow_mut().grad.take()
    }

    pub fn zero_grad(&self) {
        self.0.borrow_mut().grad = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &Matrix) {
        let mut data = self.0.borrow_mut();
        if data.frozen {
            return;
        }
        match &mut data.grad {
            Some(acc) => acc.add_assign(g),
            None => data.grad = Some(g.clone()),
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.0.borrow().frozen
    }

    pub fn set_frozen(&self, frozen: bool) {
        let mut data = self.0.borrow_mut();
        data.frozen = frozen;
        if frozen {
            data.grad = None;
        }
    }

    pub fn ptr_eq(&self, other: &Param) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }
}

impl fmt::Debug for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.0.borrow();
        write!(
            f,
            "Param({}, {}x{}{})",
            data.name,
            data.value.rows(),
            data.value.cols(),
            if data.frozen { ", frozen" } else { "" }
        )
    }
}
