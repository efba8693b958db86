from setuptools import setup, find_namespace_packages

setup(
    name="sectordyn",
    version="0.1.0",
    packages=find_namespace_packages(include=["app*"]),
    package_data={"app.examples": ["presets/*.json"]},
    install_requires=[
        "numpy>=1.26.0",
        "scipy>=1.11.0",
        "pydantic>=2.6.1",
        "pydantic-settings>=2.1.0",
        "python-dotenv>=1.0.0",
    ],
    extras_require={
        "dev": ["pytest>=7.4.3", "pytest-cov>=4.1.0"],
    },
    entry_points={
        "console_scripts": ["sectordyn=app.cli.commands:main"],
    },
)
