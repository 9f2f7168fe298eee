"""Exception types shared across the harness."""


class MosaicError(Exception):
    """Base class for all harness errors."""


# --- motion bank ---

class MalformedFile(MosaicError):
    """Container file violates the .mbank schema (magic, header, shapes)."""


class NonUnitQuaternion(MosaicError):
    """Quaternion norm deviates from 1 by more than the tolerance."""


class BadRate(MosaicError):
    """Frame rate is not strictly positive."""


class HeterogeneousSchema(MosaicError):
    """Clips disagree on dof / body count / fps."""


class EmptyBank(MosaicError):
    """A bank needs at least one clip."""


class MotionOutOfRange(MosaicError):
    """Motion index outside [0, M) or negative frame index."""


class BadRank(MosaicError):
    """Shard rank outside [0, world)."""


# --- curriculum ---

class PoolTooLarge(MosaicError):
    """Active pool size exceeds the number of motions."""


# --- rewards / control / env ---

class DimensionMismatch(MosaicError):
    """Array sizes inconsistent with the robot model or each other."""


class NonPositiveParam(MosaicError):
    """Gain-derivation parameters must be strictly positive."""


class EnvNotReset(MosaicError):
    """step() called before reset() or after termination."""


# --- teleop stream ---

class BufferNotFull(MosaicError):
    """Rolling buffer has fewer samples than its window length."""


class NoMatches(MosaicError):
    """No common sequence numbers between sent and received packets."""


# --- policies ---

class HistoryUnderfull(MosaicError):
    """Observation history buffer holds fewer than the required frames."""


class UntaggedSample(MosaicError):
    """Distillation sample carries no regime tag."""


class MissingData(MosaicError):
    """Adaptation strategy invoked without the data it needs."""


# --- periodic-motion model ---

class TrajTooShort(MosaicError):
    """Trajectory shorter than the requested horizon."""


class NoPeriodicity(MosaicError):
    """Signal spectrum has no usable dominant peak."""


class TooFewSamples(MosaicError):
    """Fewer style samples than mixture components."""


# --- harness ---

class ConfigError(MosaicError):
    """Bad experiment config; message carries the offending key path."""


class MissingArtifacts(MosaicError):
    """Run directory lacks the artifacts a report needs."""
