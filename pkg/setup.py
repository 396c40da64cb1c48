from setuptools import setup, find_packages

def read_requirements():
    with open('requirements.txt') as f:
        return [line.strip() for line in f
                if line.strip() and not line.startswith('#') and not line.startswith('pytest')]

setup(
    name="skillmove",
    version="0.1.0",
    packages=find_packages(exclude=("tests", "examples", "examples.*")),
    install_requires=read_requirements(),
    entry_points={
        'console_scripts': [
            'skillmove=src.launcher:main',
        ],
    },
    description="Skill-conditioned human chess move prediction",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
    extras_require={
        'dev': ['pytest>=8.0'],
    }
)
