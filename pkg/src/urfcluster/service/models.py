"""Request and response bodies for the HTTP API."""

from __future__ import annotations

from pydantic import BaseModel, Field, model_validator

from ..seriation import LINKAGE_METHODS


class DatasetInfo(BaseModel):
    dataset_id: str
    m: int
    q: int
    has_labels: bool
    created: bool = False


class ParentRef(BaseModel):
    session_id: str
    lo: int
    hi: int


class SessionRequest(BaseModel):
    """Create a clustering session on a dataset or a parent's row range."""

    dataset_id: str | None = None
    trees: int = Field(default=200, ge=1)
    i_min: float = Field(default=0.29, ge=0.0, le=0.5)
    m_min: int = Field(default=2, ge=2)
    linkage: str = "average"
    olo: bool = False
    seed: int = Field(default=0, ge=0)
    parent: str | None = None
    range: tuple[int, int] | None = None

    @model_validator(mode="after")
    def _check(self) -> "SessionRequest":
        if self.linkage not in LINKAGE_METHODS:
            raise ValueError(f"linkage must be one of {', '.join(LINKAGE_METHODS)}")
        if (self.dataset_id is None) == (self.parent is None):
            raise ValueError("give exactly one of dataset_id or parent")
        if self.parent is not None and self.range is None:
            raise ValueError("parent sessions need a range")
        if self.parent is None and self.range is not None:
            raise ValueError("range only applies with a parent")
        return self


class SessionRecord(BaseModel):
    session_id: str
    status: str
    dataset_id: str
    config: dict
    parent: ParentRef | None = None
    error: dict | None = None
    created: bool = False
