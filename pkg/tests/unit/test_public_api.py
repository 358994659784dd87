"""Test that public API is correctly exported."""


def test_public_api_exports() -> None:
    """All public symbols should be importable from equinest."""
    from equinest import (
        ArtifactError,
        Channel,
        ChannelKind,
        DiagnosticSet,
        EquilibriumPosterior,
        EquilibriumState,
        EquinestError,
        Machine,
        MachineGeometry,
        ParameterSpace,
        ProfileCoeffs,
        Reconstruction,
        RunConfig,
        RunParams,
        register_channel_kind,
        run_nested,
    )

    assert Reconstruction is not None
    assert RunConfig is not None
    assert Machine is not None
    assert MachineGeometry is not None
    assert Channel is not None
    assert ChannelKind is not None
    assert DiagnosticSet is not None
    assert register_channel_kind is not None
    assert ProfileCoeffs is not None
    assert EquilibriumState is not None
    assert EquilibriumPosterior is not None
    assert ParameterSpace is not None
    assert RunParams is not None
    assert run_nested is not None
    assert issubclass(ArtifactError, EquinestError)


def test_all_names_resolve() -> None:
    """Every name in __all__ should be an attribute of the package."""
    import equinest

    for name in equinest.__all__:
        assert hasattr(equinest, name), name


def test_version_available() -> None:
    """Package version should be available."""
    import equinest

    assert hasattr(equinest, "__version__")
    # Check version format (X.Y.Z) rather than hardcoded value
    assert equinest.__version__
    parts = equinest.__version__.split(".")
    assert len(parts) == 3
    assert all(part.isdigit() for part in parts)
