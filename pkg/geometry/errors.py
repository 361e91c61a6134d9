class DegenerateCloudError(ValueError):
    """Cloud has no usable extent or too few points for the request."""


class DegenerateMatchError(ValueError):
    """Correspondence set cannot determine a rigid transform."""


class CloudFormatError(ValueError):
    """Point-cloud file could not be parsed."""


class FeatureFileError(ValueError):
    """Precomputed feature file is malformed or misaligned with its cloud."""
