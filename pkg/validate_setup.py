#!/usr/bin/env python3
"""
Simple validation script to check project structure and basic functionality.
"""

import json
import os
import sys
from pathlib import Path

import yaml

LIBRARY_MODULES = [
    "src/main.py",
    "src/config_loader.py",
    "src/pencils/pencil_core.py",
    "src/systems/system_forms.py",
    "src/systems/system_io.py",
    "src/analysis/popov_kyp.py",
    "src/analysis/palindromic_inertia.py",
    "src/solvers/lure_solver.py",
    "src/control/optimal_control.py",
    "src/utils/errors.py",
    "src/utils/output_manager.py",
]

SYSTEM_FILES = [
    "config/systems/running_example.json",
    "config/systems/not_i_controllable.json",
]


def check_project_structure():
    """Check that all required directories and files exist."""
    print("🔍 Checking project structure...")

    required_dirs = ["config/systems", "src/pencils", "src/systems", "src/analysis",
                     "src/solvers", "src/control", "src/utils", "tests"]
    required_files = ["requirements.txt", "README.md", "config/base_config.yaml"] + LIBRARY_MODULES

    missing_dirs = [d for d in required_dirs if not Path(d).exists()]
    missing_files = [f for f in required_files if not Path(f).exists()]

    if missing_dirs:
        print(f"❌ Missing directories: {missing_dirs}")
        return False
    if missing_files:
        print(f"❌ Missing files: {missing_files}")
        return False

    print("✅ Project structure looks good!")
    return True


def check_configuration():
    """Check that the base config is valid YAML with every section."""
    print("🔧 Checking configuration files...")

    try:
        with open("config/base_config.yaml", 'r', encoding='utf-8') as f:
            config = yaml.safe_load(f)
    except Exception as e:
        print(f"  ❌ config/base_config.yaml: {e}")
        return False

    for section in ('tolerances', 'sampling', 'solver', 'output'):
        if section not in config:
            print(f"  ❌ Missing section: {section}")
            return False

    print("  ✅ config/base_config.yaml")
    return True


def check_system_files():
    """Check that bundled system files carry n, m and the pencil matrices."""
    print("📐 Checking system files...")

    for path in SYSTEM_FILES:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
            missing = [key for key in ('n', 'm', 'E', 'A', 'B') if key not in data]
            if missing:
                print(f"  ❌ {path}: missing {missing}")
                return False
            print(f"  ✅ {path}")
        except Exception as e:
            print(f"  ❌ {path}: {e}")
            return False

    return True


def check_python_syntax():
    """Check Python syntax of the library modules."""
    print("🐍 Checking Python syntax...")

    for file_path in LIBRARY_MODULES:
        try:
            with open(file_path, 'r', encoding='utf-8') as f:
                compile(f.read(), file_path, 'exec')
            print(f"  ✅ {file_path}")
        except SyntaxError as e:
            print(f"  ❌ {file_path}: Syntax error at line {e.lineno}: {e.msg}")
            return False

    return True


def check_imports():
    """Check that the example system loads and is regular."""
    print("📦 Checking basic imports...")

    original_cwd = os.getcwd()
    try:
        os.chdir(Path(__file__).parent)
        sys.path.insert(0, str(Path("src")))

        try:
            from config_loader import get_merged_config, build_tolerances
            tol = build_tolerances(get_merged_config())
            print(f"  ✅ config_loader (seed {tol.seed})")
        except Exception as e:
            print(f"  ❌ config_loader: {e}")
            return False

        try:
            from systems.system_io import load_system
            w = load_system(SYSTEM_FILES[0])
            print(f"  ✅ running example loaded (n={w.n}, m={w.m})")
        except Exception as e:
            print(f"  ❌ running example: {e}")
            return False

        return True

    finally:
        os.chdir(original_cwd)


def main():
    """Run all validation checks."""
    print("🧪 Validating dlqkit setup")
    print("=" * 50)

    checks = [
        check_project_structure,
        check_configuration,
        check_system_files,
        check_python_syntax,
        check_imports,
    ]

    results = []
    for check in checks:
        try:
            results.append(check())
        except Exception as e:
            print(f"❌ {check.__name__}: FAILED - {e}")
            results.append(False)
        print()

    passed = sum(results)
    total = len(results)

    print("=" * 50)
    print(f"Validation Results: {passed}/{total} checks passed")

    if passed == total:
        print("🎉 All validation checks passed!")
        print("\nNext steps:")
        print("1. Install dependencies: pip install -r requirements.txt")
        print("2. Analyze the example: python src/main.py analyze config/systems/running_example.json")
        print("3. Run the tests: python -m pytest tests -v")
        return True

    print(f"❌ {total - passed} validation checks failed")
    print("Please fix the issues above before proceeding.")
    return False


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
