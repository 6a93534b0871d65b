"""Exception types shared across femtoprop.

Every error that reflects bad input data (as opposed to a programming
mistake) derives from :class:`DataError`, which the CLI maps to exit
status 2.
"""


class DataError(ValueError):
    """Input data is malformed, inconsistent or insufficient."""


class SiteParseError(DataError):
    """A site file could not be parsed.

    ``line`` and ``column`` are 1-based; ``column`` points at the offending
    token when one can be identified.
    """

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
        self.message = message


class SiteSyntaxError(SiteParseError):
    pass


class SiteReferenceError(SiteParseError):
    pass


class DuplicateIdError(SiteParseError):
    pass


class MissingBandError(DataError, KeyError):
    """A material has no loss entry for the requested frequency."""

    def __init__(self, material, frequency_ghz):
        self.material = material
        self.frequency_ghz = frequency_ghz
        super().__init__(
            f"material {material!r} declares no loss at {frequency_ghz:g} GHz"
        )

    def __str__(self):
        return self.args[0]


class NoDataError(DataError):
    pass


class DegenerateFitError(DataError):
    pass


class PdpMismatchError(DataError):
    pass


class CampaignFormatError(DataError):
    def __init__(self, message, row=None):
        self.row = row
        prefix = f"row {row}: " if row is not None else ""
        super().__init__(prefix + message)
