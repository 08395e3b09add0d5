"""Exception hierarchy shared across the package."""


class XplainError(Exception):
    """Base class for all package errors."""


class ConfigError(XplainError):
    """Invalid configuration value or unusable config file."""


class DataError(XplainError):
    """Problems with input data (corpus layout, undecodable files)."""


# imaging

class DecodeError(DataError):
    """Byte stream is not a decodable JPEG/PNG image."""


class CropTooLarge(XplainError):
    """Requested crop exceeds the input dimensions."""


class RangeTagMismatch(XplainError):
    """Operation applied to an image tensor with the wrong value-range tag."""


# dataset

class EmptyClass(DataError):
    """A class folder contains no images."""


class NoClasses(DataError):
    """The corpus root contains no class folders."""


class ClassTooSmall(DataError):
    """A class has too few items to be split."""


# nnet

class ShapeMismatch(XplainError):
    """Tensor shape incompatible with the layer or model input."""


class UnknownVersion(XplainError):
    """Head version outside the supported 0..8 range."""


class UnknownLayerName(XplainError):
    """Layer name not present in the network."""


# gateway

class RemoteUnavailable(XplainError):
    """Remote endpoint unreachable after all retries."""


class ProtocolError(XplainError):
    """Remote endpoint violated the wire contract."""


# explain

class GradientsUnavailable(XplainError):
    """Backend cannot supply gradients (remote models serve probabilities only)."""


class TooManyFeatures(XplainError):
    """Exact Shapley enumeration limited to 12 features."""


class DegenerateDesign(XplainError):
    """Perturbation design collapsed (all sampled masks identical)."""


class StyleMismatch(XplainError):
    """Rendering style incompatible with the attribution method."""


# evalbench

class EmptyMatrix(XplainError):
    """Metrics requested for a confusion matrix with zero total count."""
