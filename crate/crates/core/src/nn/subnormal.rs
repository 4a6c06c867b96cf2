/// Flushes subnormal floats to zero on the current thread while alive.
///
/// Training drives some activations, gradients and optimizer moments
/// toward zero; once they go subnormal every operation touching them is
/// far slower. Results stay deterministic with the flag set.
#[must_use = "the previous mode is restored when the guard drops"]
pub struct FlushSubnormals {
    #[cfg(target_arch = "x86_64")]
    saved: u32,
}

#[cfg(target_arch = "x86_64")]
mod mxcsr {
    use std::arch::asm;

    /// Flush-to-zero and denormals-are-zero bits.
    pub const FTZ_DAZ: u32 = (1 << 15) | (1 << 6);

    pub fn read() -> u32 {
        let mut v: u32 = 0;
        // SAFETY: stores the SSE control register into a local.
        unsafe { asm!("stmxcsr [{}]", in(reg) &mut v, options(nostack, preserves_flags)) };
        v
    }

    pub fn write(v: u32) {
        // SAFETY: only rounding/flush bits differ from a value read from
        // the register itself, so no exception is unmasked.
        unsafe { asm!("ldmxcsr [{}]", in(reg) &v, options(nostack, preserves_flags, readonly)) };
    }
}

impl FlushSubnormals {
    pub fn enable() -> Self {
        #[cfg(target_arch = "x86_64")]
        {
            let saved = mxcsr::read();
            mxcsr::write(saved | mxcsr::FTZ_DAZ);
            Self { saved }
        }
        #[cfg(not(target_arch = "x86_64"))]
        Self {}
    }
}

impl Drop for FlushSubnormals {
    fn drop(&mut self) {
        #[cfg(target_arch = "x86_64")]
        mxcsr::write(self.saved);
    }
}
